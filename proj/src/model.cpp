#include "butd/model.hpp"

#include <algorithm>
#include <cmath>

namespace butd {

namespace {

std::vector<StageSpec> preset_stages(Backbone preset, float width) {
    auto scale = [&](int c) { return std::max(2, static_cast<int>(std::lround(c * width))); };
    if (preset == Backbone::lenet_like) {
        // six layers per stream counting the stem and the top projection
        return {{scale(12), 2, 1}, {scale(16), 2, 1}, {scale(16), 1, 1}, {scale(24), 2, 1}};
    }
    return {{scale(64), 1, 2}, {scale(128), 2, 2}, {scale(256), 2, 2}, {scale(512), 2, 2}};
}

int preset_stem(Backbone preset, float width) {
    const int c = preset == Backbone::lenet_like ? 8 : 64;
    return std::max(2, static_cast<int>(std::lround(c * width)));
}

Tensor multihot(const std::vector<int>& ids, int vocab) {
    Tensor t({vocab});
    for (int i : ids) {
        check(i >= 0 && i < vocab, strfmt("instruction index %d outside vocabulary %d", i, vocab));
        t.v[static_cast<size_t>(i)] = 1.0f;
    }
    return t;
}

} // namespace

Tensor lateral_formula(const Tensor& stream, const Tensor& projected, LateralMode mode, float alpha) {
    check(stream.same_shape(projected), "lateral: shape mismatch");
    Tensor out = stream;
    switch (mode) {
    case LateralMode::none:
        break;
    case LateralMode::additive:
        for (int64_t i = 0; i < out.numel(); ++i) out.v[static_cast<size_t>(i)] += projected.v[static_cast<size_t>(i)];
        break;
    case LateralMode::multiplicative:
        for (int64_t i = 0; i < out.numel(); ++i) out.v[static_cast<size_t>(i)] *= projected.v[static_cast<size_t>(i)];
        break;
    case LateralMode::gated:
        for (int64_t i = 0; i < out.numel(); ++i) {
            const float s = stream.v[static_cast<size_t>(i)], l = projected.v[static_cast<size_t>(i)];
            out.v[static_cast<size_t>(i)] = s * l + alpha * l;
        }
        break;
    }
    return out;
}

CounterStreamModel CounterStreamModel::build(const ModelSpec& spec_in) {
    CounterStreamModel m;
    m.spec_ = spec_in;
    ModelSpec& spec = m.spec_;
    if (spec.stages.empty()) spec.stages = preset_stages(spec.preset, spec.width_mult);
    if (spec.stem_channels == 0) spec.stem_channels = preset_stem(spec.preset, spec.width_mult);
    check(spec.task_vocab >= 1 && spec.answer_vocab >= 2, "model: vocabulary sizes invalid");

    // walk the stage shapes; the TD mirror needs every stride point even
    const int in_ch = spec.image_channels + spec.aux_channels +
                      (spec.wiring == InstructionWiring::input_map ? 1 : 0);
    m.levels_.push_back({spec.stem_channels, spec.in_h, spec.in_w});
    for (size_t i = 0; i < spec.stages.size(); ++i) {
        const auto& st = spec.stages[i];
        Level prev = m.levels_.back();
        check(st.stride == 1 || st.stride == 2, "model: stage stride must be 1 or 2");
        if (st.stride == 2)
            check(prev.h % 2 == 0 && prev.w % 2 == 0,
                  strfmt("model: mirror mismatch, odd spatial dim %dx%d entering stage %zu", prev.h,
                         prev.w, i + 1));
        m.levels_.push_back({st.channels, prev.h / st.stride, prev.w / st.stride});
    }
    if (spec.top_dim == 0) spec.top_dim = m.levels_.back().channels;
    m.top_dim_ = spec.top_dim;
    const int S = static_cast<int>(spec.stages.size());
    const Level& top_level = m.levels_.back();
    const int top_flat = top_level.channels * top_level.h * top_level.w;

    Rng rng(spec.init_seed);
    auto conv_w = [&](const std::string& name, int co, int ci, int k) -> void {
        m.params.add(name + ".weight", he_uniform({co, ci, k, k}, ci * k * k, rng));
        m.params.add(name + ".bias", Tensor({co}));
    };
    auto fc_w = [&](const std::string& name, int rows, int cols, bool bias) {
        m.params.add(name + ".weight", he_uniform({rows, cols}, cols, rng));
        if (bias) m.params.add(name + ".bias", Tensor({rows}));
    };

    auto build_bu = [&](const std::string& prefix, int stem_in) {
        conv_w(prefix + "stem.conv", spec.stem_channels, stem_in, 3);
        int layers = 1;
        for (int i = 1; i <= S; ++i) {
            const auto& st = spec.stages[static_cast<size_t>(i - 1)];
            const int cin = m.levels_[static_cast<size_t>(i - 1)].channels;
            if (st.blocks == 1) {
                conv_w(strfmt("%sstage%d.conv", prefix.c_str(), i), st.channels, cin, 3);
                ++layers;
            } else {
                for (int b = 0; b < st.blocks; ++b) {
                    const int bin = b == 0 ? cin : st.channels;
                    conv_w(strfmt("%sstage%d.block%d.conv0", prefix.c_str(), i, b), st.channels, bin, 3);
                    conv_w(strfmt("%sstage%d.block%d.conv1", prefix.c_str(), i, b), st.channels, st.channels, 3);
                    layers += 2;
                    if (b == 0 && (st.stride != 1 || bin != st.channels))
                        m.params.add(strfmt("%sstage%d.down.weight", prefix.c_str(), i),
                                     he_uniform({st.channels, bin, 1, 1}, bin, rng));
                }
            }
        }
        // L^T: position-preserving linear readout of the top feature map
        fc_w(prefix + "top.fc", spec.top_dim, top_flat, true);
        return layers + 1;
    };
    m.bu_layers_ = build_bu("bu.", in_ch);
    if (!spec.share_bu_weights && !spec.bu_only)
        build_bu("bu2.", spec.counterstream ? in_ch : spec.stem_channels);

    // TD mirror: top expansion, one conv per stage, full-resolution stem conv
    if (!spec.bu_only) {
        fc_w("td.top.fc", top_flat, spec.top_dim, true);
        for (int i = S; i >= 1; --i)
            conv_w(strfmt("td.stage%d.conv", i), m.levels_[static_cast<size_t>(i - 1)].channels,
                   m.levels_[static_cast<size_t>(i)].channels, 3);
        conv_w("td.stem.conv", spec.stem_channels, spec.stem_channels, 3);
        m.td_layers_ = S + 2;
    }

    if (spec.counterstream && !spec.bu_only) {
        if (spec.bu2td != LateralMode::none)
            for (int lvl = 0; lvl < S; ++lvl) {
                const int c = m.levels_[static_cast<size_t>(lvl)].channels;
                m.params.add(strfmt("lat.bu2td.stage%d.w", lvl), he_uniform({c, c, 1, 1}, c, rng));
                if (spec.bu2td == LateralMode::gated)
                    m.params.add(strfmt("lat.bu2td.stage%d.alpha", lvl), Tensor::scalar(1.0f));
            }
        if (spec.td2bu != LateralMode::none)
            for (int lvl = 0; lvl <= S; ++lvl) {
                if (spec.td2bu_bottom_only && lvl != 0) continue;
                const int c = m.levels_[static_cast<size_t>(lvl)].channels;
                m.params.add(strfmt("lat.td2bu.stage%d.w", lvl), he_uniform({c, c, 1, 1}, c, rng));
                if (spec.td2bu == LateralMode::gated)
                    m.params.add(strfmt("lat.td2bu.stage%d.alpha", lvl), Tensor::scalar(1.0f));
            }
    }

    // instruction embeddings
    if (spec.bu_only) {
        // heads only
    } else if (spec.wiring == InstructionWiring::td_top || spec.wiring == InstructionWiring::readout) {
        fc_w("emb.task", m.top_dim_, spec.task_vocab, false);
        fc_w("emb.arg", m.top_dim_, spec.arg_vocab, false);
        if (spec.arg2_vocab > 0) fc_w("emb.arg2", m.top_dim_, spec.arg2_vocab, false);
        if (spec.top_combine == TopCombine::concat_project && spec.wiring == InstructionWiring::td_top)
            fc_w("td.top.proj", m.top_dim_, m.top_dim_ * (spec.arg2_vocab > 0 ? 4 : 3), false);
    } else if (spec.wiring == InstructionWiring::input_map) {
        check(spec.in_h % 2 == 0 && spec.in_w % 2 == 0, "model: input-map wiring needs even input dims");
        fc_w("emb.input", (spec.in_h / 2) * (spec.in_w / 2), spec.task_vocab + spec.arg_vocab, false);
    }

    // heads
    if (spec.occurrence_vocab > 0) fc_w("head.occurrence", spec.occurrence_vocab, m.top_dim_, true);
    fc_w("head.task.fc1", spec.head_hidden, m.top_dim_, true);
    fc_w("head.task.fc2", spec.answer_vocab, spec.head_hidden, true);
    if (spec.wiring == InstructionWiring::readout)
        fc_w("head.task.instr", spec.head_hidden, m.top_dim_ * (spec.arg2_vocab > 0 ? 3 : 2), false);
    if (spec.seg_head) {
        m.params.add("head.seg.weight", he_uniform({1, spec.stem_channels, 1, 1}, spec.stem_channels, rng));
        m.params.add("head.seg.bias", Tensor({1}));
    }
    if (spec.loc_head) fc_w("head.loc", 2, m.top_dim_, true);
    return m;
}

std::vector<std::string> CounterStreamModel::instruction_wiring_params() const {
    switch (spec_.wiring) {
    case InstructionWiring::readout: return {"head.task.instr.weight"};
    case InstructionWiring::input_map: return {"emb.input.weight"};
    default: return {};
    }
}

Tensor CounterStreamModel::make_input(const Image& img, const std::vector<Mask>& aux) const {
    return make_input(img.to_tensor(), aux);
}

Tensor CounterStreamModel::make_input(const Tensor& image_chw, const std::vector<Mask>& aux) const {
    check(image_chw.rank() == 3 && image_chw.dim(0) == spec_.image_channels &&
              image_chw.dim(1) == spec_.in_h && image_chw.dim(2) == spec_.in_w,
          strfmt("model: input %dx%dx%d does not match spec %dx%dx%d", image_chw.dim(0), image_chw.dim(1),
                 image_chw.dim(2), spec_.image_channels, spec_.in_h, spec_.in_w));
    check(static_cast<int>(aux.size()) <= spec_.aux_channels,
          strfmt("model: %zu aux maps but only %d aux channels", aux.size(), spec_.aux_channels));
    Tensor t({spec_.image_channels + spec_.aux_channels, spec_.in_h, spec_.in_w});
    std::copy(image_chw.v.begin(), image_chw.v.end(), t.v.begin());
    const int64_t plane = static_cast<int64_t>(spec_.in_h) * spec_.in_w;
    for (size_t a = 0; a < aux.size(); ++a) {
        check(aux[a].h == spec_.in_h && aux[a].w == spec_.in_w, "model: aux map size mismatch");
        float* dst = t.v.data() + (spec_.image_channels + static_cast<int>(a)) * plane;
        for (int64_t i = 0; i < plane; ++i) dst[i] = aux[a].m[static_cast<size_t>(i)] ? 1.0f : 0.0f;
    }
    return t;
}

int CounterStreamModel::lateral(Graph& g, int stream_act, int counter_act, LateralMode mode,
                                const std::string& name) const {
    if (mode == LateralMode::none) return stream_act;
    ParamStore& ps = const_cast<ParamStore&>(params);
    int proj = g.conv2d(counter_act, g.param(ps.get(name + ".w")), -1, 1, 0);
    switch (mode) {
    case LateralMode::additive:
        return g.add(stream_act, proj);
    case LateralMode::multiplicative:
        return g.mul(stream_act, proj);
    case LateralMode::gated:
        return g.add(g.mul(stream_act, proj), g.smul(g.param(ps.get(name + ".alpha")), proj));
    default:
        return stream_act;
    }
}

int CounterStreamModel::bu_pass(Graph& g, int input_node, const std::vector<int>* td_acts,
                                std::vector<int>& acts_out, const char* prefix) const {
    ParamStore& ps = const_cast<ParamStore&>(params);
    const int S = static_cast<int>(spec_.stages.size());
    auto maybe_lateral = [&](int x, int lvl) {
        if (!td_acts || !spec_.counterstream || spec_.td2bu == LateralMode::none) return x;
        if (spec_.td2bu_bottom_only && lvl != 0) return x;
        return lateral(g, x, (*td_acts)[static_cast<size_t>(lvl)], spec_.td2bu,
                       strfmt("lat.td2bu.stage%d", lvl));
    };

    acts_out.clear();
    std::string pre(prefix);
    int x = g.conv2d(input_node, g.param(ps.get(pre + "stem.conv.weight")),
                     g.param(ps.get(pre + "stem.conv.bias")), 1, 1);
    x = maybe_lateral(x, 0);
    x = g.relu(x);
    acts_out.push_back(x);

    for (int i = 1; i <= S; ++i) {
        const auto& st = spec_.stages[static_cast<size_t>(i - 1)];
        if (st.blocks == 1) {
            x = g.conv2d(x, g.param(ps.get(strfmt("%sstage%d.conv.weight", prefix, i))),
                         g.param(ps.get(strfmt("%sstage%d.conv.bias", prefix, i))), st.stride, 1);
            x = maybe_lateral(x, i);
            x = g.relu(x);
        } else {
            for (int b = 0; b < st.blocks; ++b) {
                const int stride = b == 0 ? st.stride : 1;
                int t = g.conv2d(x, g.param(ps.get(strfmt("%sstage%d.block%d.conv0.weight", prefix, i, b))),
                                 g.param(ps.get(strfmt("%sstage%d.block%d.conv0.bias", prefix, i, b))), stride, 1);
                t = g.relu(t);
                t = g.conv2d(t, g.param(ps.get(strfmt("%sstage%d.block%d.conv1.weight", prefix, i, b))),
                             g.param(ps.get(strfmt("%sstage%d.block%d.conv1.bias", prefix, i, b))), 1, 1);
                int sc = x;
                const std::string down = strfmt("%sstage%d.down.weight", prefix, i);
                if (b == 0 && params.has(down))
                    sc = g.conv2d(x, g.param(ps.get(down)), -1, stride, 0);
                x = g.add(t, sc);
                if (b == st.blocks - 1) x = maybe_lateral(x, i);
                x = g.relu(x);
            }
        }
        acts_out.push_back(x);
    }
    return g.fc(g.flatten(x), g.param(ps.get(pre + "top.fc.weight")),
                g.param(ps.get(pre + "top.fc.bias")));
}

std::vector<int> CounterStreamModel::td_pass(Graph& g, int top_vec, const std::vector<int>& bu_acts) const {
    ParamStore& ps = const_cast<ParamStore&>(params);
    const int S = static_cast<int>(spec_.stages.size());
    std::vector<int> td_acts(static_cast<size_t>(S + 1), -1);
    int expanded = g.fc(top_vec, g.param(ps.get("td.top.fc.weight")), g.param(ps.get("td.top.fc.bias")));
    int x = g.relu(g.reshape(expanded, {levels_.back().channels, levels_.back().h, levels_.back().w}));
    td_acts[static_cast<size_t>(S)] = x;
    for (int i = S; i >= 1; --i) {
        if (spec_.stages[static_cast<size_t>(i - 1)].stride == 2) x = g.upsample2x(x);
        x = g.conv2d(x, g.param(ps.get(strfmt("td.stage%d.conv.weight", i))),
                     g.param(ps.get(strfmt("td.stage%d.conv.bias", i))), 1, 1);
        if (spec_.counterstream && spec_.bu2td != LateralMode::none)
            x = lateral(g, x, bu_acts[static_cast<size_t>(i - 1)], spec_.bu2td,
                        strfmt("lat.bu2td.stage%d", i - 1));
        x = g.relu(x);
        td_acts[static_cast<size_t>(i - 1)] = x;
    }
    x = g.conv2d(x, g.param(ps.get("td.stem.conv.weight")), g.param(ps.get("td.stem.conv.bias")), 1, 1);
    x = g.relu(x);
    td_acts[0] = x;
    return td_acts;
}

std::pair<int, int> CounterStreamModel::embed_instruction(Graph& g, const Instruction& instr) const {
    ParamStore& ps = const_cast<ParamStore&>(params);
    int et = g.fc(g.input(multihot(instr.task, spec_.task_vocab)), g.param(ps.get("emb.task.weight")), -1);
    int ea = g.fc(g.input(multihot(instr.arg, spec_.arg_vocab)), g.param(ps.get("emb.arg.weight")), -1);
    return {et, ea};
}

Tensor CounterStreamModel::embed_task_vector(const Instruction& instr) const {
    Graph g;
    auto [et, ea] = embed_instruction(g, instr);
    (void)ea;
    return g.value(et);
}

int CounterStreamModel::plain_forward_logits(Graph& g, const Tensor& input) const {
    ParamStore& ps = const_cast<ParamStore&>(params);
    std::vector<int> acts;
    int top = bu_pass(g, g.input(input), nullptr, acts, "bu.");
    int h = g.fc(top, g.param(ps.get("head.task.fc1.weight")), g.param(ps.get("head.task.fc1.bias")));
    h = g.relu(h);
    return g.fc(h, g.param(ps.get("head.task.fc2.weight")), g.param(ps.get("head.task.fc2.bias")));
}

std::vector<CycleNodes> CounterStreamModel::run_multicycle(Graph& g, const Tensor& input,
                                                           const std::vector<Instruction>& instrs) const {
    check(!instrs.empty(), "run_multicycle: empty instruction list");
    ParamStore& ps = const_cast<ParamStore&>(params);
    const int S = static_cast<int>(spec_.stages.size());

    if (spec_.bu_only) {
        CycleNodes cn;
        std::vector<int> acts;
        cn.bu1_top = cn.bu2_top = bu_pass(g, g.input(input), nullptr, acts, "bu.");
        cn.bu1_acts = cn.bu2_acts = acts;
        if (spec_.occurrence_vocab > 0)
            cn.occurrence_logits = g.fc(cn.bu1_top, g.param(ps.get("head.occurrence.weight")),
                                        g.param(ps.get("head.occurrence.bias")));
        int h = g.relu(g.fc(cn.bu2_top, g.param(ps.get("head.task.fc1.weight")),
                            g.param(ps.get("head.task.fc1.bias"))));
        cn.task_logits = g.fc(h, g.param(ps.get("head.task.fc2.weight")),
                              g.param(ps.get("head.task.fc2.bias")));
        return std::vector<CycleNodes>(instrs.size(), cn);
    }

    int input_node;
    if (spec_.wiring == InstructionWiring::input_map) {
        // the embedded instruction becomes an extra image-sized channel
        std::vector<float> cat;
        Tensor mt = multihot(instrs[0].task, spec_.task_vocab);
        Tensor ma = multihot(instrs[0].arg, spec_.arg_vocab);
        cat.insert(cat.end(), mt.v.begin(), mt.v.end());
        cat.insert(cat.end(), ma.v.begin(), ma.v.end());
        int emb = g.fc(g.input(Tensor({spec_.task_vocab + spec_.arg_vocab}, cat)),
                       g.param(ps.get("emb.input.weight")), -1);
        int map = g.upsample2x(g.reshape(emb, {1, spec_.in_h / 2, spec_.in_w / 2}));
        input_node = g.concat0({g.input(input), map});
    } else {
        input_node = g.input(input);
    }

    std::vector<CycleNodes> outs;
    std::vector<int> bu_acts;
    int bu_top = bu_pass(g, input_node, nullptr, bu_acts, "bu.");

    for (size_t t = 0; t < instrs.size(); ++t) {
        const Instruction& instr = instrs[t];
        check(!instr.empty() || spec_.wiring == InstructionWiring::input_map ||
                  spec_.wiring == InstructionWiring::none,
              "run_cycle: instruction has no active slot");
        CycleNodes cn;
        cn.bu1_acts = bu_acts;
        cn.bu1_top = bu_top;
        if (spec_.occurrence_vocab > 0)
            cn.occurrence_logits = g.fc(bu_top, g.param(ps.get("head.occurrence.weight")),
                                        g.param(ps.get("head.occurrence.bias")));

        // TD top input
        int combined = bu_top;
        int earg2 = -1;
        if (spec_.wiring == InstructionWiring::td_top || spec_.wiring == InstructionWiring::readout) {
            auto [et, ea] = embed_instruction(g, instr);
            cn.embed_task = et;
            cn.embed_arg = ea;
            if (spec_.arg2_vocab > 0)
                earg2 = g.fc(g.input(multihot(instr.arg2, spec_.arg2_vocab)),
                             g.param(ps.get("emb.arg2.weight")), -1);
            if (spec_.wiring == InstructionWiring::td_top) {
                if (spec_.top_combine == TopCombine::sum) {
                    combined = g.add(g.add(bu_top, et), ea);
                    if (earg2 >= 0) combined = g.add(combined, earg2);
                } else {
                    std::vector<int> parts = {bu_top, et, ea};
                    if (earg2 >= 0) parts.push_back(earg2);
                    combined = g.fc(g.concat0(parts), g.param(ps.get("td.top.proj.weight")), -1);
                }
            }
        }

        std::vector<int> td_acts = td_pass(g, combined, bu_acts);
        cn.td_acts = td_acts;
        if (spec_.seg_head)
            cn.seg_logits = g.conv2d(td_acts[0], g.param(ps.get("head.seg.weight")),
                                     g.param(ps.get("head.seg.bias")), 1, 0);

        // next BU pass
        std::vector<int> next_acts;
        const char* prefix = spec_.share_bu_weights ? "bu." : "bu2.";
        int next_input = spec_.counterstream ? input_node : td_acts[0];
        int next_top = bu_pass(g, next_input, spec_.counterstream ? &td_acts : nullptr, next_acts, prefix);
        cn.bu2_acts = next_acts;
        cn.bu2_top = next_top;

        int h = g.fc(next_top, g.param(ps.get("head.task.fc1.weight")), g.param(ps.get("head.task.fc1.bias")));
        if (spec_.wiring == InstructionWiring::readout) {
            std::vector<int> parts = {cn.embed_task, cn.embed_arg};
            if (earg2 >= 0) parts.push_back(earg2);
            h = g.add(h, g.fc(g.concat0(parts), g.param(ps.get("head.task.instr.weight")), -1));
        }
        h = g.relu(h);
        cn.task_logits = g.fc(h, g.param(ps.get("head.task.fc2.weight")), g.param(ps.get("head.task.fc2.bias")));
        if (spec_.loc_head)
            cn.loc_xy = g.sigmoid(
                g.fc(next_top, g.param(ps.get("head.loc.weight")), g.param(ps.get("head.loc.bias"))));

        outs.push_back(std::move(cn));
        bu_acts = next_acts;
        bu_top = next_top;
        (void)S;
    }
    return outs;
}

CycleNodes CounterStreamModel::run_cycle(Graph& g, const Tensor& input, const Instruction& instr) const {
    return run_multicycle(g, input, {instr})[0];
}

} // namespace butd
