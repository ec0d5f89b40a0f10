#include "butd/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

#include <omp.h>

#include "json.hpp"

namespace butd {

using nlohmann::json;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

Tensor occurrence_target(const Sample& s, int vocab) {
    Tensor t({vocab});
    for (int i : s.occurrence) t.v[static_cast<size_t>(i)] = 1.0f;
    return t;
}

} // namespace

int convergence_check(const std::vector<double>& acc, int window, double threshold) {
    const int n = static_cast<int>(acc.size());
    for (int e = 1; e <= n - 1; ++e) {
        const int hi = std::min(n, e + window);
        double best = -1.0;
        for (int k = e + 1; k <= hi; ++k) best = std::max(best, acc[static_cast<size_t>(k - 1)]);
        if (best - acc[static_cast<size_t>(e - 1)] < threshold) return e;
    }
    return -1;
}

int attach_losses(Graph& g, const CounterStreamModel& model, const Dataset& data, const Sample& s,
                  const CycleNodes& cn, const LossConfig& lc) {
    std::vector<int> terms;
    auto weighted = [&](int node, float w) {
        if (w == 1.0f) return node;
        return g.smul(g.input(Tensor::scalar(w)), node);
    };
    if (lc.occurrence > 0.0f && cn.occurrence_logits >= 0)
        terms.push_back(weighted(g.bce_logits(cn.occurrence_logits, occurrence_target(s, data.occ_vocab)),
                                 lc.occurrence));
    if (lc.segmentation > 0.0f && cn.seg_logits >= 0 && s.target_mask)
        terms.push_back(weighted(g.pixel_bce_logits(cn.seg_logits, s.target_mask->to_tensor()), lc.segmentation));
    if (lc.task > 0.0f && s.target >= 0) {
        const auto& grp = data.answer_groups[static_cast<size_t>(s.answer_group)];
        int logits = g.slice0(cn.task_logits, grp.offset, grp.size);
        terms.push_back(weighted(g.cross_entropy(logits, s.target - grp.offset), lc.task));
    }
    if (lc.location > 0.0f && s.has_xy && cn.loc_xy >= 0)
        terms.push_back(weighted(g.mse(cn.loc_xy, Tensor({2}, {s.target_xy[0], s.target_xy[1]})), lc.location));
    check(!terms.empty(), "attach_losses: no loss enabled for this sample");
    int loss = terms[0];
    for (size_t i = 1; i < terms.size(); ++i) loss = g.add(loss, terms[static_cast<size_t>(i)]);
    return loss;
}

TrainHistory train_model(CounterStreamModel& model, const Dataset& data, const Manifest& train,
                         const Manifest& val, const LossConfig& lc, const TrainConfig& tc) {
    check(!train.empty(), "train: empty manifest");
    check(lc.occurrence > 0 || lc.segmentation > 0 || lc.task > 0 || lc.location > 0,
          "train: no loss enabled");
    Optimizer opt(tc.opt);
    TrainHistory hist;
    const double t0 = now_s();

    std::ofstream metrics;
    if (!tc.metrics_path.empty()) metrics.open(tc.metrics_path);

    // best-val snapshot
    std::vector<Tensor> best_params;
    auto snapshot = [&] {
        best_params.clear();
        for (auto& p : model.params.all()) best_params.push_back(p->value);
    };
    auto restore = [&] {
        for (size_t i = 0; i < best_params.size(); ++i) model.params.all()[i]->value = best_params[i];
    };

    const int workers = tc.workers > 0 ? tc.workers : std::max(1, omp_get_max_threads());
    std::vector<GradSink> sinks(static_cast<size_t>(workers));
    for (auto& s : sinks) s.resize(model.params.all().size());

    int64_t seen = 0;
    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
        Manifest order = train;
        Rng rng(hash_combine(tc.shuffle_seed, static_cast<uint64_t>(epoch)));
        rng.shuffle(order);
        if (tc.resample_instructions && tc.epoch_budget > 0 &&
            tc.epoch_budget < static_cast<int>(order.size()))
            order.resize(static_cast<size_t>(tc.epoch_budget));

        double loss_sum = 0;
        std::string batch_error;
        for (size_t base = 0; base < order.size(); base += static_cast<size_t>(tc.batch_size)) {
            const int batch_n = static_cast<int>(std::min<size_t>(tc.batch_size, order.size() - base));
            double batch_loss = 0;
            // one worker per sample stripe; gradients land in per-worker
            // sinks and are reduced in a fixed order afterwards
#pragma omp parallel num_threads(workers) reduction(+ : batch_loss)
            {
                const int t = omp_get_thread_num();
                GradSink& sink = sinks[static_cast<size_t>(t)];
                for (int k = t; k < batch_n; k += workers) {
                    const Sample& s = data.samples[static_cast<size_t>(order[base + static_cast<size_t>(k)])];
                    try {
                        Graph g;
                        Tensor input =
                            model.make_input(data.images[static_cast<size_t>(s.image_index)], s.aux_masks);
                        CycleNodes cn = model.run_cycle(g, input, s.instr);
                        int loss = attach_losses(g, model, data, s, cn, lc);
                        const float lv = g.value(loss).v[0];
                        if (!std::isfinite(lv))
                            fail(strfmt("train: non-finite loss at epoch %d step %zu", epoch,
                                        base + static_cast<size_t>(k)));
                        batch_loss += lv;
                        g.backward(loss, &sink);
                    } catch (const std::exception& e) {
#pragma omp critical
                        batch_error = e.what();
                    }
                }
            }
            if (!batch_error.empty()) fail(batch_error);
            for (auto& sink : sinks)
                for (size_t pi = 0; pi < sink.size(); ++pi) {
                    if (sink[pi].numel() == 0) continue;
                    Tensor& g = model.params.all()[pi]->grad;
                    for (int64_t i = 0; i < sink[pi].numel(); ++i)
                        g.v[static_cast<size_t>(i)] += sink[pi].v[static_cast<size_t>(i)];
                    sink[pi].fill(0.0f);
                }
            loss_sum += batch_loss;
            seen += batch_n;
            opt.step(model.params, 1.0f / static_cast<float>(batch_n));
        }

        EpochStats es;
        es.epoch = epoch;
        es.train_loss = loss_sum / static_cast<double>(order.size());
        es.val_accuracy = val.empty() ? 0.0 : evaluate_accuracy(model, data, val, tc.val_limit);
        es.examples_seen = seen;
        es.wall_seconds = now_s() - t0;
        hist.epochs.push_back(es);
        if (tc.verbose)
            fprintf(stderr, "epoch %3d loss %.4f val %.4f (%.1fs)\n", epoch, es.train_loss,
                    es.val_accuracy, es.wall_seconds);
        if (metrics.is_open()) {
            json r = {{"epoch", es.epoch},
                      {"train_loss", es.train_loss},
                      {"val_accuracy", es.val_accuracy},
                      {"examples_seen", es.examples_seen},
                      {"wall_seconds", es.wall_seconds}};
            metrics << r.dump() << "\n";
            metrics.flush();
        }

        if (!val.empty() && (es.val_accuracy >= hist.best_val || hist.best_epoch < 0)) {
            hist.best_val = es.val_accuracy;
            hist.best_epoch = epoch;
            if (tc.keep_best) snapshot();
        }

        // stop only once a full window confirms the plateau
        if (!val.empty()) {
            std::vector<double> accs;
            for (const auto& e : hist.epochs) accs.push_back(e.val_accuracy);
            const int conv = convergence_check(accs, tc.convergence_window, tc.convergence_threshold);
            if (conv > 0 && epoch >= conv + tc.convergence_window) {
                hist.converged_epoch = conv;
                break;
            }
        }
    }
    if (hist.converged_epoch < 0 && !val.empty()) {
        std::vector<double> accs;
        for (const auto& e : hist.epochs) accs.push_back(e.val_accuracy);
        hist.converged_epoch = convergence_check(accs, tc.convergence_window, tc.convergence_threshold);
    }
    if (tc.keep_best && !best_params.empty()) restore();
    hist.wall_seconds = now_s() - t0;
    return hist;
}

double evaluate_accuracy(const CounterStreamModel& model, const Dataset& data, const Manifest& m,
                         int limit) {
    check(!m.empty(), "evaluate: empty manifest");
    const int n = limit > 0 ? std::min<int>(limit, static_cast<int>(m.size()))
                            : static_cast<int>(m.size());
    int correct = 0;
#pragma omp parallel for schedule(dynamic, 8) reduction(+ : correct)
    for (int k = 0; k < n; ++k) {
        const Sample& s = data.samples[static_cast<size_t>(m[static_cast<size_t>(k)])];
        Graph g;
        Tensor input = model.make_input(data.images[static_cast<size_t>(s.image_index)], s.aux_masks);
        CycleNodes cn = model.run_cycle(g, input, s.instr);
        const auto& grp = data.answer_groups[static_cast<size_t>(s.answer_group)];
        const int pred = g.value(cn.task_logits).argmax_range(grp.offset, grp.offset + grp.size);
        correct += pred == s.target ? 1 : 0;
    }
    return static_cast<double>(correct) / std::max(1, n);
}

double evaluate_iou(const CounterStreamModel& model, const Dataset& data, const Manifest& m,
                    float threshold, int limit) {
    check(!m.empty(), "evaluate: empty manifest");
    double iou_sum = 0;
    int n = 0;
    for (int idx : m) {
        if (limit > 0 && n >= limit) break;
        const Sample& s = data.samples[static_cast<size_t>(idx)];
        check(static_cast<bool>(s.target_mask), "evaluate: iou metric needs target masks");
        Graph g;
        Tensor input = model.make_input(data.images[static_cast<size_t>(s.image_index)], s.aux_masks);
        CycleNodes cn = model.run_cycle(g, input, s.instr);
        check(cn.seg_logits >= 0, "evaluate: model has no segmentation head");
        const Tensor& logits = g.value(cn.seg_logits);
        Mask pred(data.img_h, data.img_w);
        for (int64_t i = 0; i < logits.numel(); ++i) {
            const float p = 1.0f / (1.0f + std::exp(-logits.v[static_cast<size_t>(i)]));
            pred.m[static_cast<size_t>(i)] = p >= threshold ? 1 : 0;
        }
        iou_sum += mask_iou(pred, *s.target_mask);
        ++n;
    }
    return iou_sum / std::max(1, n);
}

ProbeData collect_probe_data(const CounterStreamModel& model, const Dataset& data, const Manifest& m,
                             const std::string& attach, const std::function<int(const Sample&)>& target_of) {
    ProbeData out;
    for (int idx : m) {
        const Sample& s = data.samples[static_cast<size_t>(idx)];
        const int target = target_of(s);
        if (target < 0) continue;
        Graph g;
        if (attach == "embed.task") {
            out.features.push_back(model.embed_task_vector(s.instr));
        } else {
            Tensor input = model.make_input(data.images[static_cast<size_t>(s.image_index)], s.aux_masks);
            CycleNodes cn = model.run_cycle(g, input, s.instr);
            if (attach == "bu1.top")
                out.features.push_back(g.value(cn.bu1_top));
            else if (attach == "bu2.top")
                out.features.push_back(g.value(cn.bu2_top));
            else
                fail("probe: unknown attachment point " + attach);
        }
        out.targets.push_back(target);
    }
    return out;
}

std::vector<int> train_probe_predictions(const ProbeData& train, const ProbeData& test, int classes,
                                         const ProbeConfig& cfg) {
    check(!train.features.empty() && !test.features.empty(), "probe: empty data");
    const int in_dim = static_cast<int>(train.features[0].numel());
    Rng rng(hash_combine(cfg.seed, 0x9b0be5u));
    ParamStore ps;
    Parameter& w1 = ps.add("probe.fc1.weight", he_uniform({cfg.hidden, in_dim}, in_dim, rng));
    Parameter& b1 = ps.add("probe.fc1.bias", Tensor({cfg.hidden}));
    Parameter& w2 = ps.add("probe.fc2.weight", he_uniform({classes, cfg.hidden}, cfg.hidden, rng));
    Parameter& b2 = ps.add("probe.fc2.bias", Tensor({classes}));

    OptimizerConfig oc;
    oc.lr = cfg.lr;
    Optimizer opt(oc);
    Manifest order(train.features.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng erng(hash_combine(cfg.seed, static_cast<uint64_t>(epoch + 1)));
        erng.shuffle(order);
        int in_batch = 0;
        for (size_t k = 0; k < order.size(); ++k) {
            const size_t i = static_cast<size_t>(order[k]);
            Graph g;
            int h = g.relu(g.fc(g.input(train.features[i]), g.param(w1), g.param(b1)));
            int logits = g.fc(h, g.param(w2), g.param(b2));
            g.backward(g.cross_entropy(logits, train.targets[i]));
            if (++in_batch == cfg.batch || k + 1 == order.size()) {
                opt.step(ps, 1.0f / static_cast<float>(in_batch));
                in_batch = 0;
            }
        }
    }

    std::vector<int> preds;
    preds.reserve(test.features.size());
    for (size_t i = 0; i < test.features.size(); ++i) {
        Graph g;
        int h = g.relu(g.fc(g.input(test.features[i]), g.param(w1), g.param(b1)));
        int logits = g.fc(h, g.param(w2), g.param(b2));
        preds.push_back(g.value(logits).argmax());
    }
    return preds;
}

double train_probe_and_score(const ProbeData& train, const ProbeData& test, int classes,
                             const ProbeConfig& cfg) {
    const std::vector<int> preds = train_probe_predictions(train, test, classes, cfg);
    int correct = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        correct += preds[i] == test.targets[i] ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(preds.size());
}

} // namespace butd
