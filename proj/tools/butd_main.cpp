#include <filesystem>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "butd/experiments.hpp"
#include "butd/persons.hpp"

using namespace butd;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

json load_config(const std::string& path) {
    std::ifstream is(path);
    check(static_cast<bool>(is), "cannot open config " + path);
    return json::parse(is);
}

void write_manifest(const std::string& out, const json& extra) {
    fs::create_directories(out);
    std::ofstream os(fs::path(out) / "manifest.json");
    os << extra.dump(2) << "\n";
}

int cmd_gen(const json& cfg, const std::string& out, uint64_t seed) {
    const std::string kind = cfg.at("kind").get<std::string>();
    auto get = [&](const char* k, int d) { return cfg.contains(k) ? cfg.at(k).get<int>() : d; };

    if (kind == "multi_mnist") {
        GlyphSet glyphs = procedural_glyphs(10, get("glyphs_per_class", 200), get("glyph_px", 28),
                                            hash_combine(seed, 0xd161u));
        MultiMnistConfig mc;
        mc.positions = get("positions", 2);
        mc.count = get("count", 200);
        mc.img_size = get("img_size", 56);
        mc.seed = seed;
        write_dataset(gen_multi_mnist(glyphs, mc), out);
    } else if (kind == "char_grid") {
        GlyphSet glyphs = procedural_glyphs(get("alphabet", 29), get("glyphs_per_class", 120),
                                            get("glyph_px", 14), hash_combine(seed, 0x91u));
        CharGridConfig cc;
        cc.n_chars = get("n_chars", 6);
        cc.alphabet = get("alphabet", 29);
        cc.count = get("count", 200);
        cc.img_h = get("img_h", 32);
        cc.img_w = get("img_w", 64);
        cc.examples_per_image = get("examples_per_image", 5);
        cc.location_tasks = cfg.value("location_tasks", false);
        cc.seed = seed;
        write_dataset(gen_char_grid(glyphs, cc).data, out);
    } else if (kind == "persons") {
        PersonsConfig pc;
        pc.count = get("count", 200);
        pc.img_h = get("img_h", 56);
        pc.img_w = get("img_w", 112);
        pc.persons_min = get("persons_min", 2);
        pc.persons_max = get("persons_max", 2);
        pc.examples_per_image = get("examples_per_image", 10);
        pc.occlusion = cfg.value("occlusion", false);
        if (pc.occlusion) pc.persons_min = pc.persons_max = get("persons_max", 4);
        pc.seed = seed;
        write_dataset(gen_persons(pc).data, out);
    } else if (kind == "miniscene") {
        MiniSceneConfig mc;
        mc.count = get("count", 50);
        mc.img_h = get("img_h", 56);
        mc.img_w = get("img_w", 112);
        mc.seed = seed;
        MiniSceneData data = gen_miniscene(mc);
        fs::create_directories(fs::path(out) / "images");
        for (size_t i = 0; i < data.images.size(); ++i)
            write_png(data.images[i], (fs::path(out) / "images" / strfmt("%06zu.png", i)).string());
        write_scenes(data.scenes, (fs::path(out) / "scenes.jsonl").string());
        write_dataset(data.expansion, (fs::path(out) / "expansion").string());
        write_dataset(data.elaboration, (fs::path(out) / "elaboration").string());
        write_manifest(out, {{"kind", "miniscene"}, {"count", mc.count}, {"seed", seed}});
    } else {
        fail("gen: unknown dataset kind " + kind);
    }
    std::cout << "dataset written to " << out << "\n";
    return kExitOk;
}

ModelSpec model_spec_from_json(const json& mc, const Dataset& data) {
    ModelSpec spec;
    if (mc.value("preset", "custom") == std::string("lenet_like")) spec.preset = Backbone::lenet_like;
    if (mc.value("preset", "custom") == std::string("resnet18_like")) spec.preset = Backbone::resnet18_like;
    if (mc.contains("stages")) {
        spec.stages.clear();
        for (const auto& st : mc.at("stages"))
            spec.stages.push_back({st[0].get<int>(), st[1].get<int>(), st.size() > 2 ? st[2].get<int>() : 1});
    } else if (mc.value("preset", "custom") == std::string("custom")) {
        spec.stages = {{12, 2, 1}, {16, 2, 1}, {24, 2, 1}};
    }
    spec.stem_channels = mc.value("stem_channels", 8);
    spec.width_mult = mc.value("width_mult", 1.0f);
    spec.in_h = data.img_h;
    spec.in_w = data.img_w;
    spec.aux_channels = data.aux_channels;
    spec.task_vocab = data.task_vocab;
    spec.arg_vocab = data.arg_vocab;
    spec.occurrence_vocab = data.occ_vocab;
    spec.answer_vocab = data.answer_vocab;
    spec.head_hidden = mc.value("head_hidden", 48);
    spec.seg_head = mc.value("seg_head", false);
    spec.loc_head = mc.value("loc_head", false);
    spec.td2bu = mc.value("td2bu_gated", false) ? LateralMode::gated : LateralMode::additive;
    spec.init_seed = mc.value("init_seed", 1);
    return spec;
}

int cmd_train(const json& cfg, const std::string& out, uint64_t seed) {
    Dataset data = read_dataset(cfg.at("dataset").get<std::string>());
    ModelSpec spec = model_spec_from_json(cfg.value("model", json::object()), data);
    const std::string variant = cfg.value("variant", "bu_td");
    CounterStreamModel model = CounterStreamModel::build(variant_spec(variant_from_name(variant), spec));

    Manifest all(data.samples.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    Rng rng(seed);
    rng.shuffle(all);
    const size_t val_n = std::max<size_t>(1, all.size() / 20);
    Manifest val(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(val_n));
    Manifest train(all.begin() + static_cast<std::ptrdiff_t>(val_n), all.end());

    LossConfig lc;
    lc.occurrence = cfg.value("loss_occurrence", 1.0f);
    lc.segmentation = cfg.value("loss_segmentation", 0.0f);
    lc.task = cfg.value("loss_task", 1.0f);
    lc.location = cfg.value("loss_location", 0.0f);

    TrainConfig tc;
    tc.opt.lr = cfg.value("lr", 1e-3f);
    tc.batch_size = cfg.value("batch_size", 24);
    tc.max_epochs = cfg.value("max_epochs", 20);
    tc.shuffle_seed = seed;
    tc.verbose = true;
    fs::create_directories(out);
    tc.metrics_path = (fs::path(out) / "metrics.jsonl").string();

    TrainHistory hist = train_model(model, data, train, val, lc, tc);
    save_checkpoint(model.params, (fs::path(out) / "model.ckpt").string());
    write_manifest(out, {{"kind", "train"},
                         {"dataset", cfg.at("dataset")},
                         {"variant", variant},
                         {"best_val", hist.best_val},
                         {"epochs", hist.epochs.size()},
                         {"checkpoint", "model.ckpt"}});
    std::cout << "best val accuracy " << hist.best_val << " after " << hist.epochs.size()
              << " epochs; checkpoint in " << out << "\n";
    return kExitOk;
}

int cmd_eval(const json& cfg, const std::string& out, uint64_t seed) {
    (void)seed;
    Dataset data = read_dataset(cfg.at("dataset").get<std::string>());
    ModelSpec spec = model_spec_from_json(cfg.value("model", json::object()), data);
    const std::string variant = cfg.value("variant", "bu_td");
    CounterStreamModel model = CounterStreamModel::build(variant_spec(variant_from_name(variant), spec));
    load_checkpoint(model.params, cfg.at("checkpoint").get<std::string>());

    Manifest all(data.samples.size());
    for (size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
    const std::string metric = cfg.value("metric", "accuracy");
    double score = metric == "iou" ? evaluate_iou(model, data, all) : evaluate_accuracy(model, data, all);
    write_manifest(out, {{"kind", "eval"}, {"metric", metric}, {"score", score}});
    std::cout << metric << " " << score << "\n";
    return kExitOk;
}

int cmd_routine(const json& cfg, const std::string& out, uint64_t seed, const std::string& backend_kind) {
    check(backend_kind == "oracle" || backend_kind == "trained", "routine: backend must be oracle or trained");
    const std::string mode = cfg.value("mode", "full");
    MiniSceneConfig mc;
    mc.count = cfg.value("scenes", 10);
    mc.seed = seed;
    mc.emit_samples = false;
    MiniSceneData data = gen_miniscene(mc);
    const int scene_id = cfg.value("scene", 0);
    check(scene_id >= 0 && scene_id < mc.count, "routine: scene id out of range");

    std::unique_ptr<PerceptionBackend> backend;
    std::unique_ptr<CounterStreamModel> exp_model, elab_model;
    if (backend_kind == "oracle") {
        backend = make_oracle_backend(data.scenes[static_cast<size_t>(scene_id)]);
    } else {
        Dataset exp_data = read_dataset(cfg.at("expansion_dataset").get<std::string>());
        Dataset elab_data = read_dataset(cfg.at("elaboration_dataset").get<std::string>());
        ModelSpec es = model_spec_from_json(cfg.value("model", json::object()), exp_data);
        es.seg_head = true;
        ModelSpec ls = model_spec_from_json(cfg.value("model", json::object()), elab_data);
        exp_model = std::make_unique<CounterStreamModel>(CounterStreamModel::build(es));
        elab_model = std::make_unique<CounterStreamModel>(CounterStreamModel::build(ls));
        load_checkpoint(exp_model->params, cfg.at("expansion_checkpoint").get<std::string>());
        load_checkpoint(elab_model->params, cfg.at("elaboration_checkpoint").get<std::string>());
        backend = make_trained_backend(*exp_model, *elab_model);
    }

    fs::create_directories(out);
    if (mode == "full") {
        SceneGraph g = extract_full_structure(*backend, data.images[static_cast<size_t>(scene_id)]);
        write_scene_graph(g, (fs::path(out) / "extracted.json").string());
        write_png(data.images[static_cast<size_t>(scene_id)], (fs::path(out) / "scene.png").string());
        std::cout << "extracted " << g.items.size() << " items to " << out << "\n";
    } else {
        QueryGraph q = read_query_graph(cfg.at("query").get<std::string>());
        QueryResult res = ground_query(*backend, data.images[static_cast<size_t>(scene_id)], q);
        write_scene_graph(res.retrieved, (fs::path(out) / "retrieved.json").string());
        write_manifest(out, {{"kind", "routine"},
                             {"success", res.success},
                             {"answer", res.answer},
                             {"items", res.retrieved.items.size()}});
        std::cout << (res.success ? "success" : "failure") << ", answer " << res.answer << "\n";
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"counter-streams toolkit: datasets, training, visual routines, experiments"};
    app.require_subcommand(1);
    app.fallthrough(); // global flags may follow the subcommand

    std::string config_path, out = "out", backend = "oracle", results_dir, kind;
    uint64_t seed = 17;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--seed", seed, "master seed");
    app.add_option("--out", out, "output directory");
    app.add_option("--backend", backend, "routine backend: oracle | trained");

    auto* gen = app.add_subcommand("gen", "generate a dataset directory");
    auto* train = app.add_subcommand("train", "train a model on a dataset directory");
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    auto* routine = app.add_subcommand("routine", "run full/guided extraction on a scene");
    auto* experiment = app.add_subcommand("experiment", "run a named experiment");
    experiment->add_option("--kind", kind, "experiment kind (used when no config is given)");
    auto* report = app.add_subcommand("report", "collect reports into tables");
    report->add_option("--results", results_dir, "directory of completed runs")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        json cfg;
        if (!config_path.empty())
            cfg = load_config(config_path);
        else if (experiment->parsed() && !kind.empty())
            cfg = default_experiment_config(kind);

        if (gen->parsed()) return cmd_gen(cfg, out, seed);
        if (train->parsed()) return cmd_train(cfg, out, seed);
        if (eval->parsed()) return cmd_eval(cfg, out, seed);
        if (routine->parsed()) return cmd_routine(cfg, out, seed, backend);
        if (experiment->parsed()) {
            if (!cfg.contains("kind")) fail("experiment: config must name a kind");
            json rep = run_experiment(cfg, out);
            std::cout << rep.dump(2) << "\n";
            return kExitOk;
        }
        if (report->parsed()) {
            run_report(results_dir, out);
            std::cout << "report written to " << out << "\n";
            return kExitOk;
        }
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const butd::error& e) {
        const std::string what = e.what();
        std::cerr << "error: " << what << "\n";
        if (what.find("non-finite") != std::string::npos || what.find("NaN") != std::string::npos)
            return kExitNumeric;
        return kExitConfig;
    }
    return kExitOk;
}
