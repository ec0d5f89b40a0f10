#include "butd/experiments.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "butd/persons.hpp"

namespace butd {

namespace fs = std::filesystem;
using nlohmann::json;

const char* variant_name(ModelVariant v) {
    switch (v) {
    case ModelVariant::bu_td: return "bu_td";
    case ModelVariant::unguided_readout: return "unguided_readout";
    case ModelVariant::bu_instruction_guided: return "bu_instruction_guided";
    default: return "plain_backbone_guided";
    }
}

ModelVariant variant_from_name(const std::string& name) {
    for (ModelVariant v : {ModelVariant::bu_td, ModelVariant::unguided_readout,
                           ModelVariant::bu_instruction_guided, ModelVariant::plain_backbone_guided})
        if (name == variant_name(v)) return v;
    fail("unknown model variant: " + name);
}

ModelSpec variant_spec(ModelVariant v, ModelSpec base) {
    switch (v) {
    case ModelVariant::bu_td:
        base.wiring = InstructionWiring::td_top;
        break;
    case ModelVariant::unguided_readout:
        base.wiring = InstructionWiring::readout;
        break;
    case ModelVariant::bu_instruction_guided:
        base.wiring = InstructionWiring::input_map;
        break;
    case ModelVariant::plain_backbone_guided:
        base.wiring = InstructionWiring::input_map;
        base.counterstream = false;
        base.share_bu_weights = false;
        break;
    }
    return base;
}

double selectivity_index(const std::vector<std::vector<double>>& acc, double chance, bool* clamped) {
    check(!acc.empty() && acc.size() == acc[0].size(), "selectivity: matrix must be square");
    double diag = 0, off = 0;
    int n = static_cast<int>(acc.size()), n_off = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            if (r == c)
                diag += acc[static_cast<size_t>(r)][static_cast<size_t>(c)];
            else {
                off += acc[static_cast<size_t>(r)][static_cast<size_t>(c)];
                ++n_off;
            }
        }
    diag /= n;
    off /= std::max(1, n_off);
    double denom = off - chance;
    bool was_clamped = denom < 1e-6;
    if (was_clamped) denom = 1e-6;
    if (clamped) *clamped = was_clamped;
    return (diag - chance) / denom;
}

// ---------------- shared helpers ----------------

namespace {

template <typename T>
T get_or(const json& cfg, const char* key, T fallback) {
    if (cfg.contains(key)) return cfg.at(key).get<T>();
    return fallback;
}

Manifest full_manifest(const Dataset& d) {
    Manifest m(d.samples.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = static_cast<int>(i);
    return m;
}

void save_report(json report, const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    report["config"] = cfg;
    std::ofstream os(fs::path(out_dir) / "report.json");
    check(static_cast<bool>(os), "experiment: cannot write report in " + out_dir);
    os << report.dump(2) << "\n";
}

TrainConfig base_train_config(const json& cfg, const std::string& out_dir, const char* tag) {
    TrainConfig tc;
    tc.opt.kind = get_or<std::string>(cfg, "optimizer", "adam") == "adam" ? OptKind::adam
                                                                          : OptKind::sgd_momentum;
    tc.opt.lr = get_or<float>(cfg, "lr", 1e-3f);
    tc.opt.weight_decay = get_or<float>(cfg, "weight_decay", 0.0f);
    tc.batch_size = get_or<int>(cfg, "batch_size", 24);
    tc.max_epochs = get_or<int>(cfg, "max_epochs", 40);
    tc.convergence_window = get_or<int>(cfg, "convergence_window", 8);
    tc.convergence_threshold = get_or<double>(cfg, "convergence_threshold", 0.02);
    tc.shuffle_seed = get_or<uint64_t>(cfg, "seed", 17);
    tc.val_limit = get_or<int>(cfg, "val_limit", 500);
    tc.epoch_budget = get_or<int>(cfg, "epoch_budget", 0);
    tc.resample_instructions = tc.epoch_budget > 0;
    tc.verbose = get_or<bool>(cfg, "verbose", false);
    if (!out_dir.empty()) tc.metrics_path = (fs::path(out_dir) / (std::string(tag) + ".metrics.jsonl")).string();
    return tc;
}

json history_json(const TrainHistory& h) {
    return {{"epochs", h.epochs.size()},
            {"converged_epoch", h.converged_epoch},
            {"best_epoch", h.best_epoch},
            {"best_val", h.best_val},
            {"examples_seen", h.epochs.empty() ? 0 : h.epochs.back().examples_seen},
            {"wall_seconds", h.wall_seconds}};
}

void dump_seg_png(const CounterStreamModel& model, const Dataset& data, const Sample& s,
                  const std::string& path) {
    Graph g;
    CycleNodes cn = model.run_cycle(g, model.make_input(data.images[static_cast<size_t>(s.image_index)], s.aux_masks),
                                    s.instr);
    if (cn.seg_logits < 0) return;
    const Tensor& logits = g.value(cn.seg_logits);
    Image out(data.img_h, data.img_w);
    for (size_t i = 0; i < out.px.size(); ++i) {
        const float p = 1.0f / (1.0f + std::exp(-logits.v[i]));
        out.px[i] = static_cast<uint8_t>(std::lround(p * 255.0f));
    }
    write_png(out, path);
}

// scans composed manifests for exclusion-soundness (harness-side mirror of
// the make_exclusion_split invariants)
void verify_exclusion_sound(const Dataset& train_data, const std::set<int>& excluded) {
    for (const auto& pairs : train_data.image_pairs)
        for (int k : pairs)
            check(!excluded.count(k), "comb-gen: training image realizes an excluded pair");
    for (const auto& s : train_data.samples)
        check(s.pair_key < 0 || !excluded.count(s.pair_key),
              "comb-gen: training sample queries an excluded pair");
}

GlyphSet digit_glyphs(uint64_t seed) { return procedural_glyphs(10, 200, 28, hash_combine(seed, 0xd161u)); }

} // namespace

// ---------------- multi-mnist multi-task (capacity) ----------------

json run_multimnist_multitask(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const uint64_t seed = get_or<uint64_t>(cfg, "seed", 17);
    const int positions = get_or<int>(cfg, "positions", 2);
    GlyphSet glyphs = digit_glyphs(seed);

    MultiMnistConfig mc;
    mc.positions = positions;
    mc.count = get_or<int>(cfg, "train_images", 10000);
    mc.seed = hash_combine(seed, 1);
    Dataset train = gen_multi_mnist(glyphs, mc);
    mc.count = get_or<int>(cfg, "val_images", 400);
    mc.seed = hash_combine(seed, 2);
    Dataset val = gen_multi_mnist(glyphs, mc);
    mc.count = get_or<int>(cfg, "test_images", 1000);
    mc.seed = hash_combine(seed, 3);
    Dataset test = gen_multi_mnist(glyphs, mc);

    ModelSpec base;
    base.preset = Backbone::lenet_like;
    base.width_mult = get_or<float>(cfg, "width_mult", 0.75f);
    base.in_h = base.in_w = train.img_h;
    base.task_vocab = train.task_vocab;
    base.arg_vocab = train.arg_vocab;
    base.occurrence_vocab = train.occ_vocab;
    base.answer_vocab = train.answer_vocab;
    base.init_seed = hash_combine(seed, 11);

    LossConfig lc;
    lc.occurrence = 1.0f;
    lc.task = 1.0f;
    TrainConfig tc = base_train_config(cfg, out_dir, "bu_td");
    tc.max_epochs = get_or<int>(cfg, "max_epochs", 6);
    tc.convergence_window = get_or<int>(cfg, "convergence_window", 4);

    CounterStreamModel butd_model = CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));
    TrainHistory bh = train_model(butd_model, train, full_manifest(train), full_manifest(val), lc, tc);
    const double butd_acc = evaluate_accuracy(butd_model, test, full_manifest(test));

    // single-task baselines: one plain BU net per location, same budget
    json singles = json::array();
    double single_sum = 0;
    for (int p = 0; p < positions; ++p) {
        Manifest tr, va, te;
        for (size_t i = 0; i < train.samples.size(); ++i)
            if (train.samples[i].instr.task[0] == p) tr.push_back(static_cast<int>(i));
        for (size_t i = 0; i < val.samples.size(); ++i)
            if (val.samples[i].instr.task[0] == p) va.push_back(static_cast<int>(i));
        for (size_t i = 0; i < test.samples.size(); ++i)
            if (test.samples[i].instr.task[0] == p) te.push_back(static_cast<int>(i));
        ModelSpec ss = base;
        ss.bu_only = true;
        ss.init_seed = hash_combine(seed, 100 + static_cast<uint64_t>(p));
        CounterStreamModel single = CounterStreamModel::build(ss);
        TrainConfig stc = base_train_config(cfg, out_dir, strfmt("single_p%d", p).c_str());
        stc.max_epochs = tc.max_epochs;
        stc.convergence_window = tc.convergence_window;
        LossConfig slc;
        slc.task = 1.0f;
        TrainHistory sh = train_model(single, train, tr, va, slc, stc);
        const double acc = evaluate_accuracy(single, test, te);
        single_sum += acc;
        singles.push_back({{"position", p}, {"accuracy", acc}, {"history", history_json(sh)}});
    }
    const double single_avg = single_sum / positions;

    json report = {{"kind", "multimnist_multitask"},
                   {"positions", positions},
                   {"bu_td_accuracy", butd_acc},
                   {"bu_td_history", history_json(bh)},
                   {"single_task_avg", single_avg},
                   {"single_task", singles},
                   {"gap", butd_acc - single_avg}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- task selectivity ----------------

json run_selectivity(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const uint64_t seed = get_or<uint64_t>(cfg, "seed", 23);
    GlyphSet glyphs = digit_glyphs(seed);
    const int positions = get_or<int>(cfg, "positions", 4);

    MultiMnistConfig mc;
    mc.positions = positions;
    mc.count = get_or<int>(cfg, "train_images", 5000);
    mc.seed = hash_combine(seed, 1);
    Dataset train = gen_multi_mnist(glyphs, mc);
    mc.count = get_or<int>(cfg, "probe_images", 900);
    mc.seed = hash_combine(seed, 2);
    Dataset probe_set = gen_multi_mnist(glyphs, mc);

    ModelSpec base;
    base.preset = Backbone::lenet_like;
    base.width_mult = get_or<float>(cfg, "width_mult", 0.75f);
    base.in_h = base.in_w = train.img_h;
    base.task_vocab = positions;
    base.arg_vocab = 1;
    base.answer_vocab = 10;
    base.init_seed = hash_combine(seed, 11);
    CounterStreamModel model = CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));

    // task loss only: an occurrence loss would push the set of present
    // digits into the representation and lift every non-selected readout
    // above chance by construction
    LossConfig lc;
    lc.task = 1.0f;
    TrainConfig tc = base_train_config(cfg, out_dir, "bu_td");
    tc.max_epochs = get_or<int>(cfg, "max_epochs", 6);
    tc.convergence_window = get_or<int>(cfg, "convergence_window", 4);
    TrainHistory hist = train_model(model, train, full_manifest(train), {}, lc, tc);

    // digit-at-location ground truth for every (image, selected task) pair:
    // probe p reads the digit at location p from the bu2 representation
    const int probe_train = get_or<int>(cfg, "probe_train_images", 600);
    std::vector<std::vector<int>> digits_at(probe_set.images.size(), std::vector<int>(positions, -1));
    for (const auto& s : probe_set.samples)
        digits_at[static_cast<size_t>(s.image_index)][s.instr.task[0]] = s.target;

    // one feature pass per (image, selected task)
    std::vector<std::vector<Tensor>> feats(static_cast<size_t>(positions)); // by selected task
    for (size_t img = 0; img < probe_set.images.size(); ++img) {
        for (int sel = 0; sel < positions; ++sel) {
            Graph g;
            CycleNodes cn = model.run_cycle(g, model.make_input(probe_set.images[img], {}),
                                            Instruction::of(sel));
            feats[static_cast<size_t>(sel)].push_back(g.value(cn.bu2_top));
        }
    }

    ProbeConfig pc;
    pc.seed = hash_combine(seed, 31);
    pc.epochs = get_or<int>(cfg, "probe_epochs", 120);
    const int test_images = static_cast<int>(probe_set.images.size()) - probe_train;
    std::vector<std::vector<double>> acc(static_cast<size_t>(positions),
                                         std::vector<double>(static_cast<size_t>(positions), 0.0));
    for (int p = 0; p < positions; ++p) { // readout location
        // one probe per location, trained on all selected tasks mixed,
        // then scored per selected task
        ProbeData tr, te;
        for (int sel = 0; sel < positions; ++sel)
            for (size_t img = 0; img < probe_set.images.size(); ++img) {
                ProbeData& dst = static_cast<int>(img) < probe_train ? tr : te;
                dst.features.push_back(feats[static_cast<size_t>(sel)][img]);
                dst.targets.push_back(digits_at[img][p]);
            }
        ProbeConfig pcc = pc;
        pcc.seed = hash_combine(pc.seed, static_cast<uint64_t>(p));
        const std::vector<int> preds = train_probe_predictions(tr, te, 10, pcc);
        // test features were appended selected-task-major
        for (int sel = 0; sel < positions; ++sel) {
            int ok = 0;
            for (int i = 0; i < test_images; ++i) {
                const size_t k = static_cast<size_t>(sel * test_images + i);
                ok += preds[k] == te.targets[k] ? 1 : 0;
            }
            acc[static_cast<size_t>(p)][static_cast<size_t>(sel)] =
                static_cast<double>(ok) / std::max(1, test_images);
        }
    }

    bool clamped = false;
    const double index = selectivity_index(acc, 0.1, &clamped);
    double max_offdiag_dev = 0;
    for (int r = 0; r < positions; ++r)
        for (int c = 0; c < positions; ++c)
            if (r != c)
                max_offdiag_dev = std::max(max_offdiag_dev, std::fabs(acc[static_cast<size_t>(r)][static_cast<size_t>(c)] - 0.1));

    json report = {{"kind", "selectivity"},
                   {"positions", positions},
                   {"accuracy_matrix", acc},
                   {"selectivity_index", index},
                   {"denominator_clamped", clamped},
                   {"max_offdiagonal_deviation_from_chance", max_offdiag_dev},
                   {"history", history_json(hist)}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- combinatorial generalization ----------------

namespace {

struct CombGenData {
    Dataset train, val, test;
    std::set<int> excluded;
    std::vector<int> universe;
};

CombGenData build_emnist6_data(const json& cfg, uint64_t seed) {
    const int alphabet = 29;
    GlyphSet glyphs = procedural_glyphs(alphabet, 120, get_or<int>(cfg, "glyph_px", 14),
                                        hash_combine(seed, 0x91u));
    CombGenData out;
    for (int l = 0; l < alphabet; ++l)
        for (int r = 0; r < alphabet; ++r)
            if (l != r) out.universe.push_back(char_pair_key(l, r, alphabet));
    out.excluded = choose_excluded_pairs(out.universe, get_or<double>(cfg, "exclusion_fraction", 0.05),
                                         hash_combine(seed, 0xe0u));

    CharGridConfig cc;
    cc.n_chars = 6;
    cc.alphabet = alphabet;
    cc.img_h = get_or<int>(cfg, "img_h", 32);
    cc.img_w = get_or<int>(cfg, "img_w", 64);
    cc.examples_per_image = get_or<int>(cfg, "examples_per_image", 5);
    cc.avoid_pairs = out.excluded;
    cc.count = get_or<int>(cfg, "train_images", 2000);
    cc.seed = hash_combine(seed, 1);
    out.train = gen_char_grid(glyphs, cc).data;
    cc.count = get_or<int>(cfg, "val_images", 120);
    cc.seed = hash_combine(seed, 2);
    out.val = gen_char_grid(glyphs, cc).data;

    CharGridConfig tcfg = cc;
    tcfg.avoid_pairs.clear();
    tcfg.force_pairs.assign(out.excluded.begin(), out.excluded.end());
    tcfg.examples_per_image = 1; // the planted excluded pair is the query
    tcfg.count = get_or<int>(cfg, "test_images", 300);
    tcfg.seed = hash_combine(seed, 3);
    out.test = gen_char_grid(glyphs, tcfg).data;
    return out;
}

CombGenData build_persons_data(const json& cfg, uint64_t seed) {
    CombGenData out;
    const int slots = 20;
    for (int id = 0; id < 6; ++id)
        for (int s = 0; s < slots; ++s) out.universe.push_back(person_combo_key(id, s));
    out.excluded = choose_person_exclusions(6, get_or<double>(cfg, "exclusion_fraction", 0.10),
                                            hash_combine(seed, 0xe1u));

    PersonsConfig pc;
    pc.img_h = get_or<int>(cfg, "img_h", 56);
    pc.img_w = get_or<int>(cfg, "img_w", 112);
    pc.examples_per_image = get_or<int>(cfg, "examples_per_image", 14);
    pc.avoid_combos = out.excluded;
    pc.count = get_or<int>(cfg, "train_images", 1600);
    pc.seed = hash_combine(seed, 1);
    out.train = gen_persons(pc).data;
    pc.count = get_or<int>(cfg, "val_images", 80);
    pc.seed = hash_combine(seed, 2);
    out.val = gen_persons(pc).data;

    PersonsConfig tc = pc;
    tc.avoid_combos.clear();
    tc.force_combos.assign(out.excluded.begin(), out.excluded.end());
    tc.examples_per_image = 1;
    tc.count = get_or<int>(cfg, "test_images", 240);
    tc.seed = hash_combine(seed, 3);
    out.test = gen_persons(tc).data;
    return out;
}

json comb_gen_variant(const json& cfg, const std::string& out_dir, const CombGenData& data,
                      ModelVariant variant, uint64_t seed, int64_t* param_count) {
    ModelSpec base;
    base.stem_channels = get_or<int>(cfg, "stem_channels", 6);
    base.stages.clear();
    for (const auto& st : cfg.contains("stages")
                              ? cfg.at("stages")
                              : json::array({json::array({10, 2}), json::array({14, 2}), json::array({20, 2})}))
        base.stages.push_back({st[0].get<int>(), st[1].get<int>(), 1});
    base.in_h = data.train.img_h;
    base.in_w = data.train.img_w;
    base.task_vocab = data.train.task_vocab;
    base.arg_vocab = data.train.arg_vocab;
    base.occurrence_vocab = data.train.occ_vocab;
    base.answer_vocab = data.train.answer_vocab;
    base.aux_channels = data.train.aux_channels;
    base.head_hidden = get_or<int>(cfg, "head_hidden", 48);
    base.td2bu = LateralMode::additive;
    base.init_seed = hash_combine(seed, 7);

    CounterStreamModel model = CounterStreamModel::build(variant_spec(variant, base));
    if (param_count) *param_count = model.params.total_count();

    LossConfig lc;
    lc.occurrence = 1.0f;
    lc.task = 1.0f;
    TrainConfig tc = base_train_config(cfg, out_dir, variant_name(variant));
    TrainHistory hist = train_model(model, data.train, full_manifest(data.train),
                                    full_manifest(data.val), lc, tc);
    const double non_gen = evaluate_accuracy(model, data.val, full_manifest(data.val));
    const double gen = evaluate_accuracy(model, data.test, full_manifest(data.test));
    return {{"variant", variant_name(variant)},
            {"non_generalization_accuracy", non_gen},
            {"generalization_accuracy", gen},
            {"epochs", hist.epochs.size()},
            {"converged_epoch", hist.converged_epoch},
            {"examples_seen", hist.epochs.empty() ? 0 : hist.epochs.back().examples_seen},
            {"history", history_json(hist)}};
}

} // namespace

json run_comb_gen(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const uint64_t seed = get_or<uint64_t>(cfg, "seed", 29);
    const std::string dataset = get_or<std::string>(cfg, "dataset", "emnist6");
    CombGenData data = dataset == "persons" ? build_persons_data(cfg, seed) : build_emnist6_data(cfg, seed);
    verify_exclusion_sound(data.train, data.excluded);
    for (const auto& s : data.test.samples)
        check(s.pair_key >= 0 && data.excluded.count(s.pair_key),
              "comb-gen: generalization sample does not query an excluded pair");
    std::set<int> covered;
    for (const auto& s : data.test.samples) covered.insert(s.pair_key);
    check(covered.size() == data.excluded.size(), "comb-gen: some excluded pair has no test sample");

    std::vector<ModelVariant> variants = {ModelVariant::bu_td, ModelVariant::unguided_readout};
    if (get_or<bool>(cfg, "all_variants", false)) {
        variants.push_back(ModelVariant::bu_instruction_guided);
        variants.push_back(ModelVariant::plain_backbone_guided);
    }

    json rows = json::array();
    std::map<std::string, int64_t> params;
    for (ModelVariant v : variants) {
        int64_t count = 0;
        try {
            rows.push_back(comb_gen_variant(cfg, out_dir, data, v, seed, &count));
        } catch (const std::exception& e) {
            rows.push_back({{"variant", variant_name(v)}, {"error", e.what()}});
        }
        params[variant_name(v)] = count;
    }

    json report = {{"kind", "comb_gen"},
                   {"dataset", dataset},
                   {"excluded_pairs", data.excluded.size()},
                   {"universe", data.universe.size()},
                   {"train_examples", data.train.samples.size()},
                   {"param_counts", params},
                   {"variants", rows}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- compound instructions ----------------

namespace {

struct CompoundScores {
    double single = 0, compound = 0;
};

CompoundScores compound_eval(const CounterStreamModel& model, const PersonsData& test) {
    const Dataset& d = test.data;
    int single_n = 0, single_ok = 0, comp_n = 0, comp_ok = 0;
    for (size_t si = 0; si < test.scenes.size(); ++si) {
        const auto& scene = test.scenes[si];
        for (const auto& pl : scene.placements) {
            // singles: every property alone
            for (int t = 0; t < person_card::kNumVariable; ++t) {
                Graph g;
                CycleNodes cn = model.run_cycle(g, model.make_input(d.images[si], {}),
                                                Instruction::of(t, pl.identity));
                const auto& grp = d.answer_groups[static_cast<size_t>(t)];
                const int pred = g.value(cn.task_logits).argmax_range(grp.offset, grp.offset + grp.size) -
                                 grp.offset;
                single_ok += pred == pl.variable[static_cast<size_t>(t)] ? 1 : 0;
                ++single_n;
            }
            // compounds: all unordered property pairs, same person, both
            // slots must be right
            for (int t1 = 0; t1 < person_card::kNumVariable; ++t1)
                for (int t2 = t1 + 1; t2 < person_card::kNumVariable; ++t2) {
                    Graph g;
                    Instruction instr;
                    instr.task = {t1, t2};
                    instr.arg = {pl.identity};
                    CycleNodes cn = model.run_cycle(g, model.make_input(d.images[si], {}), instr);
                    bool all_ok = true;
                    for (int t : {t1, t2}) {
                        const auto& grp = d.answer_groups[static_cast<size_t>(t)];
                        const int pred =
                            g.value(cn.task_logits).argmax_range(grp.offset, grp.offset + grp.size) - grp.offset;
                        if (pred != pl.variable[static_cast<size_t>(t)]) all_ok = false;
                    }
                    comp_ok += all_ok ? 1 : 0;
                    ++comp_n;
                }
        }
    }
    return {static_cast<double>(single_ok) / std::max(1, single_n),
            static_cast<double>(comp_ok) / std::max(1, comp_n)};
}

} // namespace

json run_compound(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const uint64_t seed = get_or<uint64_t>(cfg, "seed", 31);

    PersonsConfig pc;
    pc.img_h = get_or<int>(cfg, "img_h", 56);
    pc.img_w = get_or<int>(cfg, "img_w", 112);
    pc.examples_per_image = get_or<int>(cfg, "examples_per_image", 10);
    pc.count = get_or<int>(cfg, "train_images", 1000);
    pc.seed = hash_combine(seed, 1);
    PersonsData train = gen_persons(pc);
    pc.count = get_or<int>(cfg, "val_images", 60);
    pc.seed = hash_combine(seed, 2);
    PersonsData val = gen_persons(pc);
    pc.count = get_or<int>(cfg, "test_images", 60);
    pc.seed = hash_combine(seed, 3);
    PersonsData test = gen_persons(pc);

    auto make_model = [&](bool ablated) {
        ModelSpec base;
        base.stem_channels = get_or<int>(cfg, "stem_channels", 6);
        base.stages = {{10, 2, 1}, {14, 2, 1}, {20, 2, 1}};
        base.in_h = train.data.img_h;
        base.in_w = train.data.img_w;
        base.task_vocab = train.data.task_vocab;
        base.arg_vocab = train.data.arg_vocab;
        base.occurrence_vocab = train.data.occ_vocab;
        base.answer_vocab = train.data.answer_vocab;
        base.head_hidden = get_or<int>(cfg, "head_hidden", 48);
        base.td2bu = LateralMode::additive;
        base.init_seed = hash_combine(seed, 7);
        if (ablated) {
            // cross-stream connections removed up to the lowest TD->BU link,
            // which keeps the instruction pathway alive
            base.bu2td = LateralMode::none;
            base.td2bu_bottom_only = true;
        }
        return CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));
    };

    LossConfig lc;
    lc.occurrence = 1.0f;
    lc.task = 1.0f;

    CounterStreamModel intact = make_model(false);
    TrainConfig tc = base_train_config(cfg, out_dir, "intact");
    TrainHistory hist = train_model(intact, train.data, full_manifest(train.data),
                                    full_manifest(val.data), lc, tc);
    CompoundScores intact_scores = compound_eval(intact, test);

    CounterStreamModel ablated = make_model(true);
    TrainConfig tca = base_train_config(cfg, out_dir, "ablated");
    TrainHistory hist_a = train_model(ablated, train.data, full_manifest(train.data),
                                      full_manifest(val.data), lc, tca);
    CompoundScores ablated_scores = compound_eval(ablated, test);

    json report = {{"kind", "compound"},
                   {"single_accuracy", intact_scores.single},
                   {"compound_accuracy", intact_scores.compound},
                   {"ablated_single_accuracy", ablated_scores.single},
                   {"ablated_compound_accuracy", ablated_scores.compound},
                   {"intact_history", history_json(hist)},
                   {"ablated_history", history_json(hist_a)}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- symbolic vs embedded instructions ----------------

namespace {

// excluded (identity, property-type) tasks for the high condition:
// property types rotate across identities, 9 of the 30 tasks
std::set<int> high_excluded_tasks(uint64_t seed) {
    std::set<int> out;
    Rng rng(hash_combine(seed, 0x41c0u));
    while (out.size() < 9)
        out.insert(rng.uniform_int(6) * person_card::kNumVariable + rng.uniform_int(person_card::kNumVariable));
    return out;
}

} // namespace

json run_symbolic_embedded(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const uint64_t seed = get_or<uint64_t>(cfg, "seed", 37);
    const int slots = 20;

    std::vector<int> universe;
    for (int id = 0; id < 6; ++id)
        for (int s = 0; s < slots; ++s) universe.push_back(person_combo_key(id, s));

    // readout protocol: a fixed six-task holdout, one property per identity
    std::set<int> readout_holdout;
    for (int id = 0; id < 6; ++id)
        readout_holdout.insert(id * person_card::kNumVariable + (id % person_card::kNumVariable));

    auto condition = [&](const std::string& name, double fraction, bool high,
                         bool combined) -> json {
        PersonsConfig pc;
        pc.img_h = get_or<int>(cfg, "img_h", 56);
        pc.img_w = get_or<int>(cfg, "img_w", 112);
        pc.examples_per_image = get_or<int>(cfg, "examples_per_image", 10);
        pc.combined_vocab = combined;
        pc.count = get_or<int>(cfg, "train_images", 800);
        pc.seed = hash_combine(seed, 1);

        std::set<int> excluded_pairs;
        std::set<int> excluded_tasks;
        if (high) {
            excluded_tasks = high_excluded_tasks(seed);
            // exclude every value of the property for those tasks
            for (int key : excluded_tasks) {
                const int id = key / person_card::kNumVariable;
                const int t = key % person_card::kNumVariable;
                for (int v = 0; v < person_card::kVariable[t]; ++v)
                    excluded_pairs.insert(person_combo_key(id, person_slot(t, v)));
            }
        } else {
            excluded_pairs = choose_person_exclusions(6, fraction, hash_combine(seed, 0xec2u));
        }

        // the high condition excludes instructions, not presentations
        if (!high) pc.avoid_combos = excluded_pairs;
        PersonsData train = gen_persons(pc);
        if (high) {
            // drop samples that query an excluded task
            Dataset filtered = train.data;
            filtered.samples.clear();
            for (const auto& s : train.data.samples) {
                const int task_key = combined ? s.instr.task[0]
                                              : s.instr.arg[0] * person_card::kNumVariable + s.instr.task[0];
                if (!excluded_tasks.count(task_key)) filtered.samples.push_back(s);
            }
            train.data = std::move(filtered);
        }

        pc.avoid_combos.clear();
        pc.count = get_or<int>(cfg, "val_images", 60);
        pc.seed = hash_combine(seed, 2);
        if (!high) pc.avoid_combos = excluded_pairs;
        PersonsData val = gen_persons(pc);

        PersonsConfig gc = pc;
        gc.avoid_combos.clear();
        gc.examples_per_image = 1;
        gc.count = get_or<int>(cfg, "test_images", 200);
        gc.seed = hash_combine(seed, 3);
        gc.force_combos.assign(excluded_pairs.begin(), excluded_pairs.end());
        PersonsData test = gen_persons(gc);

        ModelSpec base;
        base.stem_channels = get_or<int>(cfg, "stem_channels", 6);
        base.stages = {{10, 2, 1}, {14, 2, 1}, {20, 2, 1}};
        base.in_h = train.data.img_h;
        base.in_w = train.data.img_w;
        base.task_vocab = train.data.task_vocab;
        base.arg_vocab = train.data.arg_vocab;
        base.occurrence_vocab = train.data.occ_vocab;
        base.answer_vocab = train.data.answer_vocab;
        base.head_hidden = get_or<int>(cfg, "head_hidden", 48);
        base.td2bu = LateralMode::additive;
        base.init_seed = hash_combine(seed, 7);
        CounterStreamModel model = CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));

        LossConfig lc;
        lc.occurrence = 1.0f;
        lc.task = 1.0f;
        TrainConfig tc = base_train_config(cfg, out_dir, (name + (combined ? "_symbolic" : "_compositional")).c_str());
        TrainHistory hist = train_model(model, train.data, full_manifest(train.data),
                                        full_manifest(val.data), lc, tc);
        const double pred = evaluate_accuracy(model, test.data, full_manifest(test.data));

        json row = {{"condition", name},
                    {"mode", combined ? "symbolic" : "compositional"},
                    {"prediction_accuracy", pred},
                    {"epochs", hist.epochs.size()},
                    {"history", history_json(hist)}};

        if (combined) {
            // probe: recover (person, property) from the embedded instruction
            std::set<int> test_tasks = high ? excluded_tasks : readout_holdout;
            ProbeData ptr_person, pte_person, ptr_prop, pte_prop;
            for (int task = 0; task < 30; ++task) {
                Instruction instr = Instruction::of(task);
                Tensor e = model.embed_task_vector(instr);
                const bool is_test = test_tasks.count(task) > 0;
                if (high && !is_test && excluded_tasks.count(task)) continue;
                ProbeData& dp = is_test ? pte_person : ptr_person;
                ProbeData& dt = is_test ? pte_prop : ptr_prop;
                dp.features.push_back(e);
                dp.targets.push_back(task / person_card::kNumVariable);
                dt.features.push_back(e);
                dt.targets.push_back(task % person_card::kNumVariable);
            }
            ProbeConfig pcfg;
            pcfg.hidden = 24;
            pcfg.epochs = get_or<int>(cfg, "probe_epochs", 400);
            pcfg.batch = 8;
            pcfg.seed = hash_combine(seed, 41);
            const std::vector<int> pred_person = train_probe_predictions(ptr_person, pte_person, 6, pcfg);
            ProbeConfig pcfg2 = pcfg;
            pcfg2.seed = hash_combine(seed, 42);
            const std::vector<int> pred_prop =
                train_probe_predictions(ptr_prop, pte_prop, person_card::kNumVariable, pcfg2);
            int person_ok = 0, prop_ok = 0, both_ok = 0;
            for (size_t i = 0; i < pred_person.size(); ++i) {
                const bool p_ok = pred_person[i] == pte_person.targets[i];
                const bool t_ok = pred_prop[i] == pte_prop.targets[i];
                person_ok += p_ok;
                prop_ok += t_ok;
                both_ok += p_ok && t_ok;
            }
            const double n_test = static_cast<double>(pred_person.size());
            row["readout_person_accuracy"] = person_ok / n_test;
            row["readout_property_accuracy"] = prop_ok / n_test;
            row["readout_accuracy"] = both_ok / n_test; // instructed person and property
        }
        return row;
    };

    json rows = json::array();
    rows.push_back(condition("low", 0.075, false, true));
    rows.push_back(condition("medium", 0.40, false, true));
    rows.push_back(condition("high", 0.75, true, true));
    rows.push_back(condition("low", 0.075, false, false));
    if (get_or<bool>(cfg, "compositional_all_levels", false)) {
        rows.push_back(condition("medium", 0.40, false, false));
        rows.push_back(condition("high", 0.75, true, false));
    }

    json report = {{"kind", "symbolic_embedded"}, {"rows", rows}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- occlusion relation ----------------

json run_occlusion(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const uint64_t seed = get_or<uint64_t>(cfg, "seed", 41);

    PersonsConfig pc;
    pc.occlusion = true;
    pc.persons_min = pc.persons_max = 4;
    pc.img_h = get_or<int>(cfg, "img_h", 56);
    pc.img_w = get_or<int>(cfg, "img_w", 112);
    pc.examples_per_image = get_or<int>(cfg, "examples_per_image", 3);
    pc.count = get_or<int>(cfg, "train_images", 1600);
    pc.seed = hash_combine(seed, 1);
    PersonsData train = gen_persons(pc);
    pc.count = get_or<int>(cfg, "val_images", 80);
    pc.seed = hash_combine(seed, 2);
    PersonsData val = gen_persons(pc);
    pc.count = get_or<int>(cfg, "test_images", 300);
    pc.seed = hash_combine(seed, 3);
    PersonsData test = gen_persons(pc);

    ModelSpec base;
    base.stem_channels = get_or<int>(cfg, "stem_channels", 6);
    base.stages = {{10, 2, 1}, {14, 2, 1}, {20, 2, 1}};
    base.in_h = train.data.img_h;
    base.in_w = train.data.img_w;
    base.aux_channels = 2;
    base.task_vocab = train.data.task_vocab;
    base.arg_vocab = train.data.arg_vocab;
    base.arg2_vocab = train.data.arg_vocab;
    base.occurrence_vocab = train.data.occ_vocab;
    base.answer_vocab = train.data.answer_vocab;
    base.head_hidden = get_or<int>(cfg, "head_hidden", 48);
    base.td2bu = LateralMode::additive;
    base.seg_head = true;
    base.init_seed = hash_combine(seed, 7);
    CounterStreamModel model = CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));

    // the three losses: occurrence at BU1, task at BU2, segmentation at TD
    LossConfig lc;
    lc.occurrence = 1.0f;
    lc.task = 1.0f;
    lc.segmentation = 1.0f;
    TrainConfig tc = base_train_config(cfg, out_dir, "occlusion");
    TrainHistory hist = train_model(model, train.data, full_manifest(train.data),
                                    full_manifest(val.data), lc, tc);

    const double acc = evaluate_accuracy(model, test.data, full_manifest(test.data));
    const double iou = evaluate_iou(model, test.data, full_manifest(test.data), 0.5f,
                                    get_or<int>(cfg, "iou_limit", 100));
    for (int i = 0; i < 4 && i < static_cast<int>(test.data.samples.size()); ++i)
        dump_seg_png(model, test.data, test.data.samples[static_cast<size_t>(i)],
                     (fs::path(out_dir) / strfmt("segmentation_%02d.png", i)).string());

    json report = {{"kind", "occlusion"},
                   {"task_accuracy", acc},
                   {"segmentation_iou", iou},
                   {"history", history_json(hist)}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- generalization via location ----------------

json run_relation_via_location(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    const uint64_t seed = get_or<uint64_t>(cfg, "seed", 43);
    const int alphabet = 29;
    const int glyph_px = get_or<int>(cfg, "glyph_px", 14);
    GlyphSet glyphs = procedural_glyphs(alphabet, 120, glyph_px, hash_combine(seed, 0x91u));

    // shapes 0..9 are the familiar set: the neighbor-location step trains
    // only on them; locate and classify train on the whole alphabet
    std::vector<int> familiar;
    for (int c = 0; c < 10; ++c) familiar.push_back(c);

    CharGridConfig cc;
    cc.n_chars = 6;
    cc.alphabet = alphabet;
    cc.img_h = get_or<int>(cfg, "img_h", 32);
    cc.img_w = get_or<int>(cfg, "img_w", 64);
    cc.examples_per_image = get_or<int>(cfg, "examples_per_image", 2);
    cc.location_tasks = true;
    cc.location_stride = get_or<int>(cfg, "location_stride", 2);
    cc.relation_train_classes = familiar;
    cc.count = get_or<int>(cfg, "train_images", 900);
    cc.seed = hash_combine(seed, 1);
    CharGridData train = gen_char_grid(glyphs, cc);
    cc.count = get_or<int>(cfg, "val_images", 60);
    cc.seed = hash_combine(seed, 2);
    CharGridData val = gen_char_grid(glyphs, cc);
    cc.count = get_or<int>(cfg, "test_images", 160);
    cc.seed = hash_combine(seed, 3);
    CharGridData test = gen_char_grid(glyphs, cc);

    ModelSpec base;
    base.stem_channels = get_or<int>(cfg, "stem_channels", 8);
    base.stages = {{12, 2, 1}, {16, 2, 1}, {24, 2, 1}};
    base.in_h = train.data.img_h;
    base.in_w = train.data.img_w;
    base.aux_channels = 1;
    base.task_vocab = train.data.task_vocab;
    base.arg_vocab = train.data.arg_vocab;
    base.occurrence_vocab = train.data.occ_vocab;
    base.answer_vocab = train.data.answer_vocab;
    base.head_hidden = get_or<int>(cfg, "head_hidden", 48);
    base.td2bu = LateralMode::additive;
    base.loc_head = true;
    base.init_seed = hash_combine(seed, 7);
    CounterStreamModel model = CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));

    LossConfig lc;
    lc.occurrence = 0.5f;
    lc.task = 1.0f;
    lc.location = get_or<float>(cfg, "location_weight", 20.0f);
    TrainConfig tc = base_train_config(cfg, out_dir, "pipeline");
    TrainHistory hist = train_model(model, train.data, full_manifest(train.data),
                                    full_manifest(val.data), lc, tc);

    auto backend = make_trained_location_backend(model, std::max(2, glyph_px / 4));
    // the oracle truth for the 3-step pipeline comes from the grid records
    int fam_n = 0, fam_ok = 0, nov_n = 0, nov_ok = 0;
    for (size_t img = 0; img < test.truths.size(); ++img) {
        const auto& truth = test.truths[img];
        for (size_t k = 0; k < truth.chars.size(); ++k) {
            for (int dir = 0; dir < 2; ++dir) {
                const bool right = dir == 0;
                const int col = static_cast<int>(k) % truth.cols;
                const int nb_col = col + (right ? 1 : -1);
                int want = alphabet; // no-neighbor token
                if (nb_col >= 0 && nb_col < truth.cols)
                    want = truth.chars[k + static_cast<size_t>(right ? 1 : -1)];
                int got;
                try {
                    got = relation_via_location(*backend, test.data.images[img], right, truth.chars[k],
                                                alphabet);
                } catch (const error&) {
                    got = -1;
                }
                const bool is_familiar = truth.chars[k] < 10;
                if (is_familiar) {
                    ++fam_n;
                    fam_ok += got == want ? 1 : 0;
                } else {
                    ++nov_n;
                    nov_ok += got == want ? 1 : 0;
                }
            }
        }
    }
    const double fam_acc = static_cast<double>(fam_ok) / std::max(1, fam_n);
    const double nov_acc = static_cast<double>(nov_ok) / std::max(1, nov_n);

    json report = {{"kind", "relation_via_location"},
                   {"familiar_accuracy", fam_acc},
                   {"novel_accuracy", nov_acc},
                   {"gap", fam_acc - nov_acc},
                   {"familiar_count", fam_n},
                   {"novel_count", nov_n},
                   {"history", history_json(hist)}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- oracle routine demos ----------------

json run_full_structure(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    MiniSceneConfig mc;
    mc.count = get_or<int>(cfg, "scenes", 50);
    mc.seed = get_or<uint64_t>(cfg, "seed", 47);
    mc.persons_max = get_or<int>(cfg, "persons_max", 3);
    mc.objects_max = get_or<int>(cfg, "objects_max", 2);
    mc.held_max = get_or<int>(cfg, "held_max", 1);
    mc.emit_samples = false;
    MiniSceneData data = gen_miniscene(mc);

    int exact = 0;
    for (int i = 0; i < mc.count; ++i) {
        auto backend = make_oracle_backend(data.scenes[static_cast<size_t>(i)]);
        SceneGraph got = extract_full_structure(*backend, data.images[static_cast<size_t>(i)]);
        SceneGraph want = ground_truth_graph(data.scenes[static_cast<size_t>(i)]);
        if (got.equivalent(want)) ++exact;
        if (i < 4) {
            write_scene_graph(got, (fs::path(out_dir) / strfmt("scene_%03d.json", i)).string());
            write_png(data.images[static_cast<size_t>(i)],
                      (fs::path(out_dir) / strfmt("scene_%03d.png", i)).string());
            for (size_t k = 0; k < got.items.size() && k < 3; ++k) {
                Image m(data.scenes[static_cast<size_t>(i)].img_h, data.scenes[static_cast<size_t>(i)].img_w);
                for (size_t px = 0; px < m.px.size(); ++px)
                    m.px[px] = got.items[k].mask.m[px] ? 255 : 0;
                write_png(m, (fs::path(out_dir) / strfmt("scene_%03d_item%zu.png", i, k)).string());
            }
        }
    }
    write_scenes(data.scenes, (fs::path(out_dir) / "scenes.jsonl").string());
    json report = {{"kind", "full_structure"},
                   {"scenes", mc.count},
                   {"exact_matches", exact},
                   {"exact_fraction", static_cast<double>(exact) / mc.count}};
    save_report(report, cfg, out_dir);
    return report;
}

json run_guided_query(const json& cfg, const std::string& out_dir) {
    fs::create_directories(out_dir);
    MiniSceneConfig mc;
    mc.count = get_or<int>(cfg, "scenes", 30);
    mc.seed = get_or<uint64_t>(cfg, "seed", 53);
    mc.emit_samples = false;
    MiniSceneData data = gen_miniscene(mc);

    int succeeded = 0, total = 0;
    for (int i = 0; i < mc.count; ++i) {
        const MiniScene& scene = data.scenes[static_cast<size_t>(i)];
        auto backend = make_oracle_backend(scene);
        // query the class+property of the nearest person
        for (int id : scene.main_items_by_depth()) {
            const auto& it = scene.items[static_cast<size_t>(id)];
            if (!scene_inv::is_person(it.cls)) continue;
            QueryGraph q;
            QueryNode n;
            n.id = 0;
            n.cls = it.cls;
            n.retrieve = scene_inv::kClothes;
            q.nodes.push_back(n);
            QueryResult res = ground_query(*backend, data.images[static_cast<size_t>(i)], q);
            ++total;
            if (res.success && res.answer == it.props.at(scene_inv::kClothes)) ++succeeded;
            break;
        }
    }
    json report = {{"kind", "guided_query"}, {"queries", total}, {"succeeded", succeeded}};
    save_report(report, cfg, out_dir);
    return report;
}

// ---------------- dispatch, defaults, report ----------------

json default_experiment_config(const std::string& kind) {
    json cfg;
    cfg["kind"] = kind;
    if (kind == "multimnist_multitask") {
        cfg["train_images"] = 10000;
        cfg["max_epochs"] = 4;
        cfg["convergence_window"] = 3;
    } else if (kind == "selectivity") {
        cfg["train_images"] = 4000;
        cfg["max_epochs"] = 6;
        cfg["convergence_window"] = 3;
        cfg["probe_images"] = 1400;
        cfg["probe_train_images"] = 1000;
    } else if (kind == "comb_gen") {
        cfg["dataset"] = "emnist6";
        cfg["train_images"] = 2000;
        cfg["examples_per_image"] = 5;
        cfg["max_epochs"] = 60;
        cfg["convergence_window"] = 10;
        cfg["lr"] = 0.0015;
        cfg["val_limit"] = 400;
    } else if (kind == "comb_gen_persons") {
        cfg["kind"] = "comb_gen";
        cfg["dataset"] = "persons";
        cfg["train_images"] = 1600;
        cfg["examples_per_image"] = 14;
        cfg["max_epochs"] = 26;
        cfg["convergence_window"] = 7;
        cfg["epoch_budget"] = 14000;
        cfg["batch_size"] = 28;
        cfg["lr"] = 0.0015;
        cfg["val_limit"] = 400;
    } else if (kind == "compound") {
        cfg["train_images"] = 800;
        cfg["max_epochs"] = 20;
        cfg["convergence_window"] = 6;
    } else if (kind == "symbolic_embedded") {
        cfg["train_images"] = 700;
        cfg["max_epochs"] = 18;
        cfg["convergence_window"] = 6;
    } else if (kind == "occlusion") {
        cfg["train_images"] = 1200;
        cfg["max_epochs"] = 14;
        cfg["convergence_window"] = 5;
    } else if (kind == "relation_via_location") {
        cfg["max_epochs"] = 14;
        cfg["convergence_window"] = 5;
    } else if (kind == "full_structure" || kind == "guided_query") {
        cfg["scenes"] = 50;
    } else {
        fail("unknown experiment kind: " + kind);
    }
    return cfg;
}

json run_experiment(const json& cfg, const std::string& out_dir) {
    const std::string kind = cfg.at("kind").get<std::string>();
    if (kind == "multimnist_multitask") return run_multimnist_multitask(cfg, out_dir);
    if (kind == "selectivity") return run_selectivity(cfg, out_dir);
    if (kind == "comb_gen") return run_comb_gen(cfg, out_dir);
    if (kind == "compound") return run_compound(cfg, out_dir);
    if (kind == "symbolic_embedded") return run_symbolic_embedded(cfg, out_dir);
    if (kind == "occlusion") return run_occlusion(cfg, out_dir);
    if (kind == "relation_via_location") return run_relation_via_location(cfg, out_dir);
    if (kind == "full_structure") return run_full_structure(cfg, out_dir);
    if (kind == "guided_query") return run_guided_query(cfg, out_dir);
    fail("unknown experiment kind: " + kind);
}

json run_report(const std::string& results_dir, const std::string& out_dir) {
    fs::create_directories(out_dir);
    json combined = json::array();
    std::vector<std::string> missing;
    std::vector<fs::path> paths;
    if (fs::exists(results_dir))
        for (const auto& entry : fs::recursive_directory_iterator(results_dir))
            if (entry.path().filename() == "report.json") paths.push_back(entry.path());
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) {
        std::ifstream is(p);
        combined.push_back({{"path", p.string()}, {"report", json::parse(is)}});
    }

    std::string tables;
    if (combined.empty()) tables += "no completed runs found\n";
    for (const auto& entry : combined) {
        const json& r = entry.at("report");
        const std::string kind = r.value("kind", "?");
        tables += "== " + kind + " (" + entry.at("path").get<std::string>() + ")\n";
        if (kind == "comb_gen" && r.contains("variants")) {
            tables += strfmt("%-24s %16s %16s %8s %10s\n", "variant", "non-gen acc", "gen acc", "epochs",
                             "examples");
            for (const auto& v : r.at("variants")) {
                if (v.contains("error")) {
                    tables += strfmt("%-24s failed: %s\n", v.at("variant").get<std::string>().c_str(),
                                     v.at("error").get<std::string>().c_str());
                    continue;
                }
                tables += strfmt("%-24s %16.3f %16.3f %8d %10lld\n",
                                 v.at("variant").get<std::string>().c_str(),
                                 v.at("non_generalization_accuracy").get<double>(),
                                 v.at("generalization_accuracy").get<double>(),
                                 static_cast<int>(v.at("epochs").get<size_t>()),
                                 static_cast<long long>(v.at("examples_seen").get<int64_t>()));
            }
        } else {
            for (auto& [k, v] : r.items())
                if (v.is_number())
                    tables += strfmt("  %-40s %.4f\n", k.c_str(), v.get<double>());
        }
        tables += "\n";
    }

    {
        std::ofstream os(fs::path(out_dir) / "tables.txt");
        os << tables;
    }
    json report = {{"kind", "report"}, {"runs", combined.size()}, {"missing", missing}, {"reports", combined}};
    {
        std::ofstream os(fs::path(out_dir) / "report.json");
        os << report.dump(2) << "\n";
    }
    return report;
}

} // namespace butd
