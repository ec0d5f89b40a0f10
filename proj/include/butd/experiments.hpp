#pragma once

#include "butd/routines.hpp"
#include "butd/train.hpp"

#include "json.hpp"

namespace butd {

enum class ModelVariant { bu_td, unguided_readout, bu_instruction_guided, plain_backbone_guided };
const char* variant_name(ModelVariant v);
ModelVariant variant_from_name(const std::string& name);

// applies a variant's instruction wiring / weight sharing to a base spec
ModelSpec variant_spec(ModelVariant v, ModelSpec base);

// (mean(diag) - chance) / (mean(offdiag) - chance); the denominator is
// clamped at 1e-6 and `clamped` reports when that happened
double selectivity_index(const std::vector<std::vector<double>>& acc, double chance,
                         bool* clamped = nullptr);

// Experiment runners. Every runner is deterministic under its config,
// writes report.json (plus metrics and sample dumps) under out_dir and
// returns the report. All reported numbers come from logged evaluations.
nlohmann::json run_multimnist_multitask(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_selectivity(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_comb_gen(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_compound(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_symbolic_embedded(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_occlusion(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_relation_via_location(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_full_structure(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_guided_query(const nlohmann::json& cfg, const std::string& out_dir);

// dispatch on cfg["kind"]; exit-code semantics are handled by the CLI
nlohmann::json run_experiment(const nlohmann::json& cfg, const std::string& out_dir);

// collects */report.json under results_dir into tables.txt + report.json;
// regenerating from the same logs is byte-identical
nlohmann::json run_report(const std::string& results_dir, const std::string& out_dir);

// default desk-scale configs for each experiment kind (the acceptance
// suite runs exactly these)
nlohmann::json default_experiment_config(const std::string& kind);

} // namespace butd
