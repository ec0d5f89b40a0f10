#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace butd::oracles {

using namespace scene_inv;

namespace {

const SceneItemRecord* edge_target(const MiniScene& scene, int subject, int relation) {
    for (const auto& e : scene.edges)
        if (e.subject == subject && e.relation == relation)
            return &scene.items[static_cast<size_t>(e.object)];
    return nullptr;
}

struct Matcher {
    const MiniScene& scene;
    const QueryGraph& query;
    std::vector<int> bound; // query node -> scene item id (-1 free)

    bool tests(int node, const SceneItemRecord& it) const {
        const QueryNode& n = query.nodes[static_cast<size_t>(node)];
        if (it.cls != n.cls) return false;
        for (auto [p, v] : n.props) {
            auto f = it.props.find(p);
            if (f == it.props.end() || f->second != v) return false;
        }
        return true;
    }

    bool assign(int node, int item) {
        if (std::find(bound.begin(), bound.end(), item) != bound.end()) return false;
        const auto& it = scene.items[static_cast<size_t>(item)];
        if (!tests(node, it)) return false;
        bound[static_cast<size_t>(node)] = item;
        bool ok = true;
        for (int ei : query.children_of(node)) {
            const QueryEdge& e = query.edges[static_cast<size_t>(ei)];
            const SceneItemRecord* child = edge_target(scene, item, e.relation);
            if (!child || !assign(e.to, child->id)) {
                ok = false;
                break;
            }
        }
        bound[static_cast<size_t>(node)] = -1;
        return ok;
    }

    // count the root candidates satisfying the node subtree
    int count_satisfying(int node) {
        int cnt = 0;
        for (const auto& it : scene.items) {
            if (!is_main(it.cls)) continue;
            if (assign(node, it.id)) ++cnt;
        }
        return cnt;
    }

    bool eval_root(int node) {
        const QueryNode& n = query.nodes[static_cast<size_t>(node)];
        if (n.require_all) {
            // the class selects the set; properties and relations must hold
            // for every member
            int matching = 0;
            for (const auto& it : scene.items) {
                if (!is_main(it.cls) || it.cls != n.cls) continue;
                ++matching;
                if (!assign(node, it.id)) return false;
            }
            return matching >= 1;
        }
        return count_satisfying(node) >= n.required_count;
    }

    bool run() {
        for (int r : query.roots())
            if (!eval_root(r)) return false;
        for (const auto& n : query.nodes) {
            if (n.comp == CompType::none) continue;
            const int a = count_satisfying(n.id);
            const int b = count_satisfying(n.comp_node);
            if (n.comp == CompType::same && a != b) return false;
            if (n.comp == CompType::fewer && a >= b) return false;
            if (n.comp == CompType::more && a <= b) return false;
        }
        return true;
    }
};

} // namespace

bool brute_force_query_match(const MiniScene& scene, const QueryGraph& query) {
    Matcher m{scene, query, std::vector<int>(query.nodes.size(), -1)};
    return m.run();
}

QueryGraph random_query(const MiniScene& scene, Rng& rng, bool want_positive) {
    QueryGraph q;
    std::vector<int> mains;
    for (const auto& it : scene.items)
        if (is_main(it.cls)) mains.push_back(it.id);

    const int root_item = mains[static_cast<size_t>(rng.uniform_int(static_cast<int>(mains.size())))];
    const auto& root = scene.items[static_cast<size_t>(root_item)];

    QueryNode rn;
    rn.id = 0;
    rn.cls = root.cls;
    if (rng.coin(0.6f)) {
        // one true property test
        auto it = root.props.begin();
        std::advance(it, rng.uniform_int(static_cast<int>(root.props.size())));
        rn.props.emplace_back(it->first, it->second);
    }
    if (rng.coin(0.5f)) {
        auto it = root.props.begin();
        std::advance(it, rng.uniform_int(static_cast<int>(root.props.size())));
        rn.retrieve = it->first;
    }
    q.nodes.push_back(rn);

    // follow 0-2 true relation edges out of the root
    int cursor = root_item;
    int from_node = 0;
    const int chain = rng.uniform_int(3);
    for (int d = 0; d < chain; ++d) {
        std::vector<SceneEdge> candidates;
        for (const auto& e : scene.edges) {
            if (e.subject != cursor) continue;
            auto rels = referring_relations_of(scene.items[static_cast<size_t>(e.subject)].cls);
            if (std::find(rels.begin(), rels.end(), e.relation) != rels.end()) candidates.push_back(e);
        }
        if (candidates.empty()) break;
        const SceneEdge& e = candidates[static_cast<size_t>(rng.uniform_int(static_cast<int>(candidates.size())))];
        const auto& child = scene.items[static_cast<size_t>(e.object)];
        QueryNode cn;
        cn.id = static_cast<int>(q.nodes.size());
        cn.cls = child.cls;
        if (rng.coin(0.4f) && !child.props.empty()) {
            auto it = child.props.begin();
            std::advance(it, rng.uniform_int(static_cast<int>(child.props.size())));
            cn.props.emplace_back(it->first, it->second);
        }
        q.nodes.push_back(cn);
        q.edges.push_back({from_node, e.relation, cn.id});
        from_node = cn.id;
        cursor = child.id;
    }

    if (!want_positive) {
        // perturb one constraint so the query (usually) stops matching
        Rng prng(rng.next_u64());
        QueryNode& n = q.nodes[static_cast<size_t>(prng.uniform_int(static_cast<int>(q.nodes.size())))];
        if (!n.props.empty() && prng.coin(0.7f)) {
            auto& [p, v] = n.props[0];
            v = (v + 1) % kPropertyCard[p];
        } else {
            n.cls = (n.cls + 1) % kClassCount;
            if (is_held_object(n.cls) && q.edges.empty()) n.cls = kMan; // roots must stay main
            // keep property tests applicable to the new class
            auto ok = properties_of(n.cls);
            std::erase_if(n.props, [&](const std::pair<int, int>& pv) {
                return std::find(ok.begin(), ok.end(), pv.first) == ok.end();
            });
            if (n.retrieve >= 0 && std::find(ok.begin(), ok.end(), n.retrieve) == ok.end())
                n.retrieve = ok.front();
        }
    }
    q.validate();
    return q;
}

std::vector<SceneEdge> derive_edges_reference(const MiniScene& scene) {
    std::vector<SceneEdge> edges;
    const float y_band = static_cast<float>(scene.img_h) * 0.35f;
    const float facing_dist = static_cast<float>(scene.img_w) * 0.45f;
    const auto& items = scene.items;

    for (const auto& a : items) {
        if (!is_main(a.cls)) continue;
        const SceneItemRecord* best_r = nullptr;
        const SceneItemRecord* best_l = nullptr;
        const SceneItemRecord* best_behind = nullptr;
        const SceneItemRecord* best_close = nullptr;
        const SceneItemRecord* best_face = nullptr;
        for (const auto& b : items) {
            if (!is_main(b.cls) || a.id == b.id) continue;
            if (std::fabs(b.cy - a.cy) <= y_band) {
                if (b.cx > a.cx + 4 && (!best_r || b.cx < best_r->cx)) best_r = &b;
                if (b.cx < a.cx - 4 && (!best_l || b.cx > best_l->cx)) best_l = &b;
            }
            if (b.depth > a.depth && (!best_behind || b.depth < best_behind->depth)) best_behind = &b;
            if (!best_close || std::hypot(b.cx - a.cx, b.cy - a.cy) <
                                   std::hypot(best_close->cx - a.cx, best_close->cy - a.cy))
                best_close = &b;
            if (is_person(a.cls) && is_person(b.cls)) {
                const float dx = b.cx - a.cx;
                if (std::fabs(dx) <= facing_dist && std::fabs(b.cy - a.cy) <= y_band &&
                    a.orient == (dx > 0 ? 1 : -1) && b.orient == -a.orient &&
                    (!best_face || std::fabs(dx) < std::fabs(best_face->cx - a.cx)))
                    best_face = &b;
            }
        }
        if (best_r) edges.push_back({a.id, kRightOf, best_r->id});
        if (best_l) edges.push_back({a.id, kLeftOf, best_l->id});
        if (best_behind) edges.push_back({a.id, kBehind, best_behind->id});
        if (best_close) edges.push_back({a.id, kClosest, best_close->id});
        if (best_face) edges.push_back({a.id, kFacing, best_face->id});
        for (const auto& b : items) {
            if (!is_main(b.cls) || a.id == b.id) continue;
            if (masks_adjacent(a.footprint, b.footprint, 1)) edges.push_back({a.id, kTouching, b.id});
        }
    }
    for (const auto& a : items)
        for (const auto& b : items)
            if (a.id != b.id && a.depth < b.depth && !a.footprint.intersect(b.footprint).empty())
                edges.push_back({a.id, kOccludes, b.id});
    for (const auto& it : items) {
        if (it.holder >= 0) edges.push_back({it.holder, kHolding, it.id});
        if (it.base >= 0) edges.push_back({it.base, kOn, it.id});
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

} // namespace butd::oracles
