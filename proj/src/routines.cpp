#include "butd/routines.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace butd {

using namespace scene_inv;

MaskCandidates postprocess_mask(const Tensor& score_map, float threshold, int min_pixels) {
    check(score_map.rank() == 3 && score_map.dim(0) == 1, "postprocess: score map must be (1,H,W)");
    const int h = score_map.dim(1), w = score_map.dim(2);
    Mask bin(h, w);
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
        const float s = score_map.v[static_cast<size_t>(i)];
        check(s >= 0.0f && s <= 1.0f, "postprocess: scores must be in [0,1]");
        bin.m[static_cast<size_t>(i)] = s >= threshold ? 1 : 0;
    }
    Mask opened = open3(bin);

    MaskCandidates out;
    out.selected = Mask(h, w);
    double best = -1.0;
    for (auto& comp : connected_components(opened)) {
        const int n = comp.count();
        if (n < min_pixels) continue;
        double sum = 0;
        for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i)
            if (comp.m[static_cast<size_t>(i)]) sum += score_map.v[static_cast<size_t>(i)];
        MaskCandidates::Candidate c{std::move(comp), sum / n};
        if (c.avg_score > best) {
            best = c.avg_score;
            out.selected = c.mask;
        }
        out.candidates.push_back(std::move(c));
    }
    return out;
}

int match_item_by_iou(const Mask& mask, const SceneGraph& graph, double threshold) {
    int best = -1;
    double best_iou = 0;
    for (const auto& it : graph.items) {
        const double iou = mask_iou(mask, it.mask);
        if (iou > best_iou) {
            best_iou = iou;
            best = it.id;
        }
    }
    return best_iou >= threshold ? best : -1;
}

// ---------------- oracle backend ----------------

namespace {

class OracleBackend : public PerceptionBackend {
public:
    explicit OracleBackend(const MiniScene& scene) : scene_(scene) {}

    std::pair<int, Mask> expansion_query(const Image&, const Mask& ref, int flag) override {
        if (flag == kQueryNextItem || flag == kQueryNextPerson) {
            for (int id : scene_.main_items_by_depth()) {
                const auto& it = scene_.items[static_cast<size_t>(id)];
                if (flag == kQueryNextPerson && !is_person(it.cls)) continue;
                // visible masks are pairwise disjoint, so any overlap with the
                // cumulative mask means the item was already extracted
                if (it.visible.intersect(ref).count() * 2 >= it.visible.count()) continue;
                return {it.cls, it.visible};
            }
            return {kNoItem, Mask(scene_.img_h, scene_.img_w)};
        }
        check(flag >= 0 && flag < kRelationCount, strfmt("oracle: unknown expansion flag %d", flag));
        const int subject = item_by_mask(ref);
        const auto rels = referring_relations_of(scene_.items[static_cast<size_t>(subject)].cls);
        check(std::find(rels.begin(), rels.end(), flag) != rels.end(),
              strfmt("oracle: relation %s not applicable to %s", kRelationNames[flag],
                     kClassNames[scene_.items[static_cast<size_t>(subject)].cls]));
        const SceneItemRecord* target = scene_.find_edge_target(subject, flag);
        if (!target) return {kNoItem, Mask(scene_.img_h, scene_.img_w)};
        return {target->cls, target->visible};
    }

    int elaboration_query(const Image&, const Mask& m1, const Mask& m2, int flag) override {
        const auto& a = scene_.items[static_cast<size_t>(item_by_mask(m1))];
        if (flag >= 0 && flag < kPropertyCount) {
            auto found = a.props.find(flag);
            check(found != a.props.end(), strfmt("oracle: property %s not applicable to %s",
                                                 kPropertyNames[flag], kClassNames[a.cls]));
            return found->second;
        }
        const auto& b = scene_.items[static_cast<size_t>(item_by_mask(m2))];
        if (flag == kElabOccludes) {
            if (a.footprint.intersect(b.footprint).empty()) return 2;
            return a.depth < b.depth ? 0 : 1;
        }
        if (flag == kElabFacing) {
            for (const auto& e : scene_.edges)
                if (e.relation == kFacing && e.subject == a.id && e.object == b.id) return 1;
            return 0;
        }
        fail(strfmt("oracle: unknown elaboration flag %d", flag));
    }

private:
    int item_by_mask(const Mask& m) const {
        int best = -1;
        double best_iou = 0;
        for (const auto& it : scene_.items) {
            const double iou = mask_iou(m, it.visible);
            if (iou > best_iou) {
                best_iou = iou;
                best = it.id;
            }
        }
        check(best >= 0 && best_iou >= 0.5, "oracle: reference mask matches no item");
        return best;
    }

    const MiniScene& scene_;
};

} // namespace

std::unique_ptr<PerceptionBackend> make_oracle_backend(const MiniScene& scene) {
    return std::make_unique<OracleBackend>(scene);
}

// ---------------- trained backend ----------------

namespace {

class TrainedBackend : public PerceptionBackend {
public:
    TrainedBackend(const CounterStreamModel& exp, const CounterStreamModel& elab,
                   TrainedBackendConfig cfg)
        : exp_(exp), elab_(elab), cfg_(cfg) {}

    std::pair<int, Mask> expansion_query(const Image& image, const Mask& ref, int flag) override {
        Instruction instr;
        if (flag == kQueryNextItem)
            instr = Instruction::of(kFlagNextItem);
        else if (flag == kQueryNextPerson)
            instr = Instruction::of(kFlagNextPerson);
        else
            instr = Instruction::of(kFlagRelBase + flag);
        Graph g;
        CycleNodes cn = exp_.run_cycle(g, exp_.make_input(image, {ref}), instr);
        const int cls = g.value(cn.task_logits).argmax();
        Tensor score = g.value(cn.seg_logits);
        for (auto& e : score.v) e = 1.0f / (1.0f + std::exp(-e));
        MaskCandidates cands = postprocess_mask(score, cfg_.seg_threshold, cfg_.min_pixels);
        if (cls == kNoItem || cands.selected.empty()) return {kNoItem, Mask(image.h, image.w)};
        return {cls, cands.selected};
    }

    int elaboration_query(const Image& image, const Mask& m1, const Mask& m2, int flag) override {
        Graph g;
        CycleNodes cn = elab_.run_cycle(g, elab_.make_input(image, {m1, m2}), Instruction::of(flag));
        // answers live in the flag's answer segment
        int group = flag;
        if (flag == kElabOccludes) group = kPropertyCount;
        if (flag == kElabFacing) group = kPropertyCount + 1;
        int off = 0;
        for (int t = 0; t < group; ++t)
            off += t < kPropertyCount ? kPropertyCard[t] : (t == kPropertyCount ? 3 : 2);
        const int size = group < kPropertyCount ? kPropertyCard[group] : (group == kPropertyCount ? 3 : 2);
        return g.value(cn.task_logits).argmax_range(off, off + size) - off;
    }

private:
    const CounterStreamModel& exp_;
    const CounterStreamModel& elab_;
    TrainedBackendConfig cfg_;
};

} // namespace

std::unique_ptr<PerceptionBackend> make_trained_backend(const CounterStreamModel& expansion,
                                                        const CounterStreamModel& elaboration,
                                                        TrainedBackendConfig cfg) {
    return std::make_unique<TrainedBackend>(expansion, elaboration, cfg);
}

// ---------------- full-structure extraction ----------------

SceneGraph extract_full_structure(PerceptionBackend& backend, const Image& image,
                                  const RoutineConfig& cfg) {
    SceneGraph graph;
    Mask scene_mask(image.h, image.w);
    const Mask zeros(image.h, image.w);

    auto query_props = [&](SceneItem& it) {
        for (int prop : properties_of(it.cls))
            it.props[prop] = backend.elaboration_query(image, it.mask, zeros, prop);
    };

    // phase one: extract-next until exhaustion, with IoU dedup
    int items_count = 0;
    while (items_count < cfg.max_items) {
        auto [cls, mask] = backend.expansion_query(image, scene_mask, kQueryNextItem);
        ++items_count;
        if (cls == kNoItem) break;
        scene_mask.or_with(mask);
        if (match_item_by_iou(mask, graph, cfg.iou_match_threshold) >= 0) continue;
        SceneItem it;
        it.id = static_cast<int>(graph.items.size());
        it.cls = cls;
        it.mask = std::move(mask);
        query_props(it);
        graph.items.push_back(std::move(it));
    }

    // phase two: relations per item; tool relations may add new items
    const int n_main = static_cast<int>(graph.items.size());
    for (int idx = 0; idx < n_main; ++idx) {
        for (int rel : referring_relations_of(graph.items[static_cast<size_t>(idx)].cls)) {
            auto [rel_cls, rel_mask] = backend.expansion_query(image, graph.items[static_cast<size_t>(idx)].mask, rel);
            if (rel_cls == kNoItem) continue;
            int child = match_item_by_iou(rel_mask, graph, cfg.iou_match_threshold);
            if (child < 0) {
                if (static_cast<int>(graph.items.size()) >= cfg.max_items) continue;
                SceneItem it;
                it.id = static_cast<int>(graph.items.size());
                it.cls = rel_cls;
                it.mask = rel_mask;
                query_props(it);
                child = it.id;
                graph.items.push_back(std::move(it));
            }
            graph.items[static_cast<size_t>(child)].parent_nodes.push_back(idx);
            graph.items[static_cast<size_t>(child)].parent_rels.push_back(rel);
            graph.items[static_cast<size_t>(idx)].child_nodes.push_back(child);
            graph.items[static_cast<size_t>(idx)].child_rels.push_back(rel);
        }
    }
    return graph;
}

// ---------------- guided extraction (query grounding) ----------------

namespace {

// Working state of one guided interpretation: the retrieved item array,
// the cumulative extraction mask, per-node bindings and valid-item sets.
struct InterpState {
    PerceptionBackend& backend;
    const Image& image;
    const QueryGraph& query;
    const RoutineConfig& cfg;
    SceneGraph array;
    Mask cumulative;
    Mask zeros;
    bool exhausted = false;                 // next_item returned none
    std::vector<int> binding;               // query node -> array item id, -1 free
    std::map<int, std::vector<int>> valid;  // query node -> items that satisfied it
    int answer = -1;

    InterpState(PerceptionBackend& b, const Image& img, const QueryGraph& q, const RoutineConfig& c)
        : backend(b), image(img), query(q), cfg(c), cumulative(img.h, img.w), zeros(img.h, img.w),
          binding(q.nodes.size(), -1) {}

    int add_item(int cls, Mask mask) {
        SceneItem it;
        it.id = static_cast<int>(array.items.size());
        it.cls = cls;
        it.mask = std::move(mask);
        array.items.push_back(std::move(it));
        return array.items.back().id;
    }

    // pulls one more item through the expansion network; -1 when exhausted
    int extract_next() {
        if (exhausted || static_cast<int>(array.items.size()) >= cfg.max_items) return -1;
        auto [cls, mask] = backend.expansion_query(image, cumulative, kQueryNextItem);
        if (cls == kNoItem) {
            exhausted = true;
            return -1;
        }
        cumulative.or_with(mask);
        const int dup = match_item_by_iou(mask, array, cfg.iou_match_threshold);
        if (dup >= 0) return extract_next();
        return add_item(cls, std::move(mask));
    }

    bool is_bound(int item) const {
        return std::find(binding.begin(), binding.end(), item) != binding.end();
    }

    void record_edge(const SceneEdge& e) {
        SceneItem& subj = array.items[static_cast<size_t>(e.subject)];
        for (size_t k = 0; k < subj.child_nodes.size(); ++k)
            if (subj.child_nodes[k] == e.object && subj.child_rels[k] == e.relation) return;
        subj.child_nodes.push_back(e.object);
        subj.child_rels.push_back(e.relation);
        array.items[static_cast<size_t>(e.object)].parent_nodes.push_back(e.subject);
        array.items[static_cast<size_t>(e.object)].parent_rels.push_back(e.relation);
    }

    // class and property tests of `node` against item
    bool node_tests(int node, int item) {
        const QueryNode& n = query.nodes[static_cast<size_t>(node)];
        SceneItem& it = array.items[static_cast<size_t>(item)];
        if (it.cls != n.cls) return false;
        for (auto [p, want] : n.props) {
            auto cached = it.props.find(p);
            int got;
            if (cached != it.props.end()) {
                got = cached->second;
            } else {
                got = backend.elaboration_query(image, it.mask, zeros, p);
                it.props[p] = got;
            }
            if (got != want) return false;
        }
        return true;
    }

    // one candidate item against the node's relations and recursion
    bool eval_with_item(int node, int item) {
        if (is_bound(item)) return false; // injective grounding
        if (!node_tests(node, item)) return false;
        const QueryNode& n = query.nodes[static_cast<size_t>(node)];
        binding[static_cast<size_t>(node)] = item;
        bool ok = true;
        std::vector<SceneEdge> added;
        for (int ei : query.children_of(node)) {
            const QueryEdge& e = query.edges[static_cast<size_t>(ei)];
            auto [cls, mask] = backend.expansion_query(image, array.items[static_cast<size_t>(item)].mask,
                                                       e.relation);
            if (cls == kNoItem) {
                ok = false;
                break;
            }
            int child = match_item_by_iou(mask, array, cfg.iou_match_threshold);
            if (child < 0) child = add_item(cls, std::move(mask));
            if (!eval_node(e.to, child)) {
                ok = false;
                break;
            }
            added.push_back({item, e.relation, child});
        }
        if (ok) {
            if (n.retrieve >= 0) {
                SceneItem& it = array.items[static_cast<size_t>(item)];
                auto cached = it.props.find(n.retrieve);
                answer = cached != it.props.end()
                             ? cached->second
                             : backend.elaboration_query(image, it.mask, zeros, n.retrieve);
                it.props[n.retrieve] = answer;
            }
            for (const auto& e : added) record_edge(e);
        }
        binding[static_cast<size_t>(node)] = -1; // bindings are scoped to the enumeration
        return ok;
    }

    // full node evaluation with candidate iteration and quantifiers;
    // `forced_item` >= 0 when the parent's relation already picked the item
    bool eval_node(int node, int forced_item = -1) {
        const QueryNode& n = query.nodes[static_cast<size_t>(node)];
        if (forced_item >= 0) {
            const bool ok = eval_with_item(node, forced_item);
            if (ok) valid[node].push_back(forced_item);
            return ok;
        }
        const bool exhaustive = n.require_all || n.set_fn != SetFn::none || n.comp != CompType::none;
        int matched = 0;
        size_t cursor = 0;
        while (true) {
            int item = -1;
            if (cursor < array.items.size()) {
                item = static_cast<int>(cursor++);
            } else {
                item = extract_next();
                if (item < 0) break;
                cursor = static_cast<size_t>(item) + 1;
            }
            if (n.require_all) {
                // the class selects the set; properties and relations are
                // the requirement every member must meet
                if (is_bound(item) || array.items[static_cast<size_t>(item)].cls != n.cls) continue;
                ++matched;
                if (!eval_with_item(node, item)) return false;
                valid[node].push_back(item);
            } else {
                if (!eval_with_item(node, item)) continue;
                valid[node].push_back(item);
                ++matched;
                if (!exhaustive && matched >= n.required_count) break;
            }
        }
        if (n.set_fn == SetFn::count) answer = static_cast<int>(valid[node].size());
        if (n.require_all) return matched >= 1;
        return matched >= n.required_count;
    }
};

} // namespace

QueryResult ground_query(PerceptionBackend& backend, const Image& image, const QueryGraph& query,
                         const RoutineConfig& cfg) {
    query.validate();
    InterpState st(backend, image, query, cfg);
    QueryResult res;
    res.success = true;
    for (int root : query.roots()) {
        if (!st.eval_node(root)) {
            res.success = false;
            break;
        }
    }
    if (res.success) {
        // count comparisons between evaluated nodes
        for (const auto& n : query.nodes) {
            if (n.comp == CompType::none) continue;
            const int a = static_cast<int>(st.valid[n.id].size());
            const int b = static_cast<int>(st.valid[n.comp_node].size());
            bool holds = false;
            switch (n.comp) {
            case CompType::same: holds = a == b; break;
            case CompType::fewer: holds = a < b; break;
            case CompType::more: holds = a > b; break;
            default: break;
            }
            st.answer = holds ? 1 : 0;
            if (!holds) res.success = false;
        }
    }
    res.answer = st.answer;
    res.retrieved = std::move(st.array);
    return res;
}

// ---------------- generalization via location ----------------

int relation_via_location(LocationPipelineBackend& backend, const Image& image, bool right_of,
                          int ref_class, int none_token) {
    auto q1 = backend.locate(image, ref_class);
    check(static_cast<bool>(q1), "relation_via_location: step 1 (locate) failed");
    auto q2 = backend.neighbor_location(image, *q1, right_of);
    if (!q2) return none_token;
    return backend.classify_at(image, *q2);
}

namespace {

class TrainedLocationBackend : public LocationPipelineBackend {
public:
    TrainedLocationBackend(const CounterStreamModel& model, int map_radius)
        : model_(model), radius_(map_radius) {}

    std::optional<std::pair<float, float>> locate(const Image& image, int cls) override {
        Graph g;
        CycleNodes cn = model_.run_cycle(g, model_.make_input(image, {Mask(image.h, image.w)}),
                                         Instruction::of(kTaskLocate, cls));
        const Tensor& xy = g.value(cn.loc_xy);
        return std::make_pair(xy.v[0], xy.v[1]);
    }

    std::optional<std::pair<float, float>> neighbor_location(const Image& image,
                                                             std::pair<float, float> q,
                                                             bool right) override {
        Graph g;
        CycleNodes cn = model_.run_cycle(g, model_.make_input(image, {disk(image, q)}),
                                         Instruction::of(right ? kTaskRightOfLoc : kTaskLeftOfLoc));
        // the answer head signals no-neighbor; the location head carries q2
        const Tensor& logits = g.value(cn.task_logits);
        if (logits.argmax() == logits.dim(0) - 1) return std::nullopt;
        const Tensor& xy = g.value(cn.loc_xy);
        return std::make_pair(xy.v[0], xy.v[1]);
    }

    int classify_at(const Image& image, std::pair<float, float> q) override {
        Graph g;
        CycleNodes cn = model_.run_cycle(g, model_.make_input(image, {disk(image, q)}),
                                         Instruction::of(kTaskClassifyLoc));
        return g.value(cn.task_logits).argmax();
    }

private:
    Mask disk(const Image& image, std::pair<float, float> q) const {
        Mask m(image.h, image.w);
        const int cx = static_cast<int>(std::lround(q.first * image.w));
        const int cy = static_cast<int>(std::lround(q.second * image.h));
        for (int y = -radius_; y <= radius_; ++y)
            for (int x = -radius_; x <= radius_; ++x) {
                const int yy = cy + y, xx = cx + x;
                if (yy >= 0 && yy < image.h && xx >= 0 && xx < image.w && y * y + x * x <= radius_ * radius_)
                    m.at(yy, xx) = 1;
            }
        return m;
    }

    const CounterStreamModel& model_;
    int radius_;
};

} // namespace

std::unique_ptr<LocationPipelineBackend> make_trained_location_backend(const CounterStreamModel& model,
                                                                       int map_radius) {
    return std::make_unique<TrainedLocationBackend>(model, map_radius);
}

} // namespace butd
