#include "doctest.h"

#include <filesystem>
#include <fstream>

#include "butd/experiments.hpp"

using namespace butd;
namespace fs = std::filesystem;

TEST_CASE("selectivity index formula") {
    std::vector<std::vector<double>> m(4, std::vector<double>(4, 0.12));
    for (int i = 0; i < 4; ++i) m[static_cast<size_t>(i)][static_cast<size_t>(i)] = 0.9;
    CHECK(selectivity_index(m, 0.1) == doctest::Approx(40.0));

    std::vector<std::vector<double>> flat(3, std::vector<double>(3, 0.5));
    CHECK(selectivity_index(flat, 0.1) == doctest::Approx(1.0));

    std::vector<std::vector<double>> below(2, std::vector<double>(2, 0.05));
    below[0][0] = below[1][1] = 0.9;
    bool clamped = false;
    const double idx = selectivity_index(below, 0.1, &clamped);
    CHECK(clamped);
    CHECK(idx > 1000.0);
}

TEST_CASE("variant parity: only the instruction wiring differs") {
    ModelSpec base;
    base.stem_channels = 4;
    base.stages = {{6, 2, 1}, {8, 2, 1}};
    base.in_h = 16;
    base.in_w = 16;
    base.task_vocab = 3;
    base.arg_vocab = 4;
    base.occurrence_vocab = 5;
    base.answer_vocab = 6;
    base.head_hidden = 8;

    CounterStreamModel butd_model = CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));
    CounterStreamModel unguided =
        CounterStreamModel::build(variant_spec(ModelVariant::unguided_readout, base));

    std::set<std::string> a, b;
    for (const auto& p : butd_model.params.all()) a.insert(p->name);
    for (const auto& p : unguided.params.all()) b.insert(p->name);
    std::set<std::string> extra;
    for (const auto& n : b)
        if (!a.count(n)) extra.insert(n);
    const auto wiring_list = unguided.instruction_wiring_params();
    std::set<std::string> wiring(wiring_list.begin(), wiring_list.end());
    CHECK(extra == wiring);
    for (const auto& n : a) CHECK(b.count(n) == 1);

    int64_t wiring_count = 0;
    for (const auto& n : wiring) {
        const auto& t = unguided.params.get(n).value;
        wiring_count += t.numel();
    }
    CHECK(unguided.params.total_count() == butd_model.params.total_count() + wiring_count);
}

TEST_CASE("plain backbone variant carries roughly 1.5x the parameters") {
    ModelSpec base;
    base.stem_channels = 8;
    base.stages = {{12, 2, 1}, {16, 2, 1}, {24, 2, 1}};
    base.in_h = 32;
    base.in_w = 64;
    base.task_vocab = 6;
    base.arg_vocab = 6;
    base.occurrence_vocab = 6;
    base.answer_vocab = 8;

    CounterStreamModel butd_model = CounterStreamModel::build(variant_spec(ModelVariant::bu_td, base));
    CounterStreamModel plain =
        CounterStreamModel::build(variant_spec(ModelVariant::plain_backbone_guided, base));
    const double ratio = static_cast<double>(plain.params.total_count()) /
                         static_cast<double>(butd_model.params.total_count());
    CHECK(ratio > 1.2);
    CHECK(ratio < 2.0);
}

TEST_CASE("input-map wiring embeds the instruction to a half-size map") {
    ModelSpec base;
    base.stem_channels = 4;
    base.stages = {{6, 2, 1}};
    base.in_h = 16;
    base.in_w = 24;
    base.task_vocab = 3;
    base.arg_vocab = 4;
    base.answer_vocab = 5;
    CounterStreamModel guided =
        CounterStreamModel::build(variant_spec(ModelVariant::bu_instruction_guided, base));
    const Tensor& emb = guided.params.get("emb.input.weight").value;
    CHECK(emb.dim(0) == (16 / 2) * (24 / 2));
    CHECK(emb.dim(1) == 3 + 4);

    // the embedded map must actually reach the input: different tasks give
    // different outputs on the same image
    Graph g1, g2;
    Tensor input = guided.make_input(Image(16, 24), {});
    CycleNodes c1 = guided.run_cycle(g1, input, Instruction::of(0, 0));
    CycleNodes c2 = guided.run_cycle(g2, input, Instruction::of(2, 1));
    CHECK(g1.value(c1.task_logits).content_hash() != g2.value(c2.task_logits).content_hash());
}

TEST_CASE("experiment reports regenerate byte-identically") {
    const std::string dir = "report_purity";
    fs::remove_all(dir);
    fs::create_directories(fs::path(dir) / "runs" / "a");
    fs::create_directories(fs::path(dir) / "runs" / "b");
    {
        std::ofstream os(fs::path(dir) / "runs" / "a" / "report.json");
        os << R"({"kind":"occlusion","task_accuracy":0.93})" << "\n";
    }
    {
        std::ofstream os(fs::path(dir) / "runs" / "b" / "report.json");
        os << R"({"kind":"selectivity","selectivity_index":14.2})" << "\n";
    }
    run_report((fs::path(dir) / "runs").string(), (fs::path(dir) / "out1").string());
    run_report((fs::path(dir) / "runs").string(), (fs::path(dir) / "out2").string());
    auto slurp = [](const fs::path& p) {
        std::ifstream is(p);
        return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    };
    CHECK(slurp(fs::path(dir) / "out1" / "tables.txt") == slurp(fs::path(dir) / "out2" / "tables.txt"));
    CHECK(slurp(fs::path(dir) / "out1" / "report.json") == slurp(fs::path(dir) / "out2" / "report.json"));
    CHECK(slurp(fs::path(dir) / "out1" / "tables.txt").find("occlusion") != std::string::npos);

    // empty results: a warning, not an error
    run_report((fs::path(dir) / "nothing").string(), (fs::path(dir) / "out3").string());
    CHECK(slurp(fs::path(dir) / "out3" / "tables.txt").find("no completed runs") != std::string::npos);
    fs::remove_all(dir);
}

TEST_CASE("oracle-backed full-structure experiment is exact") {
    nlohmann::json cfg = default_experiment_config("full_structure");
    cfg["scenes"] = 10;
    const std::string dir = "exp_full_structure";
    fs::remove_all(dir);
    nlohmann::json rep = run_full_structure(cfg, dir);
    CHECK(rep.at("exact_fraction").get<double>() == doctest::Approx(1.0));
    CHECK(fs::exists(fs::path(dir) / "report.json"));
    CHECK(fs::exists(fs::path(dir) / "scene_000.png"));
    fs::remove_all(dir);
}

TEST_CASE("default configs exist for every experiment kind") {
    for (const char* kind : {"multimnist_multitask", "selectivity", "comb_gen", "comb_gen_persons",
                             "compound", "symbolic_embedded", "occlusion", "relation_via_location",
                             "full_structure", "guided_query"})
        CHECK(default_experiment_config(kind).contains("kind"));
    CHECK_THROWS_AS(default_experiment_config("bogus"), error);
}
