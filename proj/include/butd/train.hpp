#pragma once

#include "butd/checkpoint.hpp"
#include "butd/model.hpp"
#include "butd/optim.hpp"

namespace butd {

// Enabled losses and their weights. A weight of zero removes the loss
// term entirely (identical training dynamics to omitting it).
struct LossConfig {
    float occurrence = 0.0f;   // binary CE on the BU1 occurrence head
    float segmentation = 0.0f; // per-pixel binary CE at the TD bottom
    float task = 1.0f;         // CE on the BU2 answer head
    float location = 0.0f;     // MSE on the normalized location head
};

struct TrainConfig {
    OptimizerConfig opt;
    int batch_size = 16;
    int max_epochs = 40;
    int convergence_window = 10;
    double convergence_threshold = 0.02;
    uint64_t shuffle_seed = 0;
    bool keep_best = true; // restore the best-val parameters afterward
    int val_limit = 0;     // cap validation samples per epoch (0 = all)
    std::string metrics_path; // per-epoch jsonl records when set
    bool resample_instructions = false; // reshuffle which samples are seen each epoch
    int epoch_budget = 0;               // samples per epoch when resampling (0 = all)
    int workers = 0;                    // batch-parallel workers; 0 = hardware default
    bool verbose = false;
};

struct EpochStats {
    int epoch = 0;
    double train_loss = 0;
    double val_accuracy = 0;
    int64_t examples_seen = 0;
    double wall_seconds = 0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    int converged_epoch = -1; // 1-based, -1 when never converged
    int best_epoch = -1;
    double best_val = 0;
    double wall_seconds = 0;
};

// Earliest epoch E (1-based) whose following window shows an improvement
// below `threshold`; -1 when no epoch qualifies.
int convergence_check(const std::vector<double>& val_accuracy, int window, double threshold);

// attaches the enabled losses of one sample to its cycle nodes
int attach_losses(Graph& g, const CounterStreamModel& model, const Dataset& data, const Sample& s,
                  const CycleNodes& cn, const LossConfig& lc);

TrainHistory train_model(CounterStreamModel& model, const Dataset& data, const Manifest& train,
                         const Manifest& val, const LossConfig& lc, const TrainConfig& tc);

// argmax-within-answer-group accuracy
double evaluate_accuracy(const CounterStreamModel& model, const Dataset& data, const Manifest& m,
                         int limit = 0);
// mean IoU of the thresholded segmentation map against the target mask
double evaluate_iou(const CounterStreamModel& model, const Dataset& data, const Manifest& m,
                    float threshold = 0.5f, int limit = 0);

// ---- readout probes ----
// Two linear layers with a ReLU, trained on cached activations; the base
// model parameters are never touched.
struct ProbeConfig {
    int hidden = 64;
    int epochs = 200;
    float lr = 1e-2f;
    int batch = 32;
    uint64_t seed = 0;
};

struct ProbeData {
    std::vector<Tensor> features;
    std::vector<int> targets;
};

// named attachment points: "bu1.top", "bu2.top", "embed.task"
ProbeData collect_probe_data(const CounterStreamModel& model, const Dataset& data, const Manifest& m,
                             const std::string& attach, const std::function<int(const Sample&)>& target_of);

double train_probe_and_score(const ProbeData& train, const ProbeData& test, int classes,
                             const ProbeConfig& cfg);

// same training loop but returns the per-example test predictions
std::vector<int> train_probe_predictions(const ProbeData& train, const ProbeData& test, int classes,
                                         const ProbeConfig& cfg);

} // namespace butd
