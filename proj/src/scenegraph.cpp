#include "butd/scenegraph.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <sstream>

#include "json.hpp"

namespace butd {

using nlohmann::json;
using namespace scene_inv;

namespace {

// order-independent signature of one item
std::string item_sig(const SceneItem& it) {
    std::ostringstream os;
    os << kClassNames[it.cls] << "|";
    for (auto [p, v] : it.props) os << kPropertyNames[p] << "=" << v << ",";
    os << "|" << it.mask.content_hash();
    return os.str();
}

std::vector<std::string> edge_sigs(const SceneGraph& g) {
    std::vector<std::string> sigs;
    for (const auto& it : g.items)
        for (size_t k = 0; k < it.child_nodes.size(); ++k) {
            std::ostringstream os;
            os << item_sig(it) << " -" << kRelationNames[it.child_rels[k]] << "-> "
               << item_sig(g.items[static_cast<size_t>(it.child_nodes[k])]);
            sigs.push_back(os.str());
        }
    std::sort(sigs.begin(), sigs.end());
    return sigs;
}

} // namespace

bool SceneGraph::equivalent(const SceneGraph& other) const { return diff(other).empty(); }

std::string SceneGraph::diff(const SceneGraph& other) const {
    std::vector<std::string> a, b;
    for (const auto& it : items) a.push_back(item_sig(it));
    for (const auto& it : other.items) b.push_back(item_sig(it));
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    if (a != b) {
        std::ostringstream os;
        os << "node multisets differ: " << a.size() << " vs " << b.size() << " items";
        for (const auto& s : a)
            if (!std::count(b.begin(), b.end(), s)) os << "\n  only here: " << s;
        for (const auto& s : b)
            if (!std::count(a.begin(), a.end(), s)) os << "\n  only there: " << s;
        return os.str();
    }
    auto ea = edge_sigs(*this), eb = edge_sigs(other);
    if (ea != eb) {
        std::ostringstream os;
        os << "edge multisets differ: " << ea.size() << " vs " << eb.size();
        for (const auto& s : ea)
            if (!std::count(eb.begin(), eb.end(), s)) os << "\n  only here: " << s;
        for (const auto& s : eb)
            if (!std::count(ea.begin(), ea.end(), s)) os << "\n  only there: " << s;
        return os.str();
    }
    return {};
}

SceneGraph ground_truth_graph(const MiniScene& scene) {
    SceneGraph g;
    // main items in extraction (depth) order, then tool items as their
    // relations would retrieve them
    std::map<int, int> id_map; // scene id -> graph index
    for (int id : scene.main_items_by_depth()) {
        const auto& rec = scene.items[static_cast<size_t>(id)];
        SceneItem it;
        it.id = static_cast<int>(g.items.size());
        it.cls = rec.cls;
        it.mask = rec.visible;
        it.props = rec.props;
        id_map[id] = it.id;
        g.items.push_back(std::move(it));
    }
    auto ensure_item = [&](int scene_id) {
        auto found = id_map.find(scene_id);
        if (found != id_map.end()) return found->second;
        const auto& rec = scene.items[static_cast<size_t>(scene_id)];
        SceneItem it;
        it.id = static_cast<int>(g.items.size());
        it.cls = rec.cls;
        it.mask = rec.visible;
        it.props = rec.props;
        id_map[scene_id] = it.id;
        g.items.push_back(std::move(it));
        return it.id;
    };
    for (const auto& e : scene.edges) {
        const auto& subj = scene.items[static_cast<size_t>(e.subject)];
        auto rels = referring_relations_of(subj.cls);
        if (std::find(rels.begin(), rels.end(), e.relation) == rels.end()) continue;
        const int pi = id_map.at(e.subject);
        const int ci = ensure_item(e.object);
        g.items[static_cast<size_t>(pi)].child_nodes.push_back(ci);
        g.items[static_cast<size_t>(pi)].child_rels.push_back(e.relation);
        g.items[static_cast<size_t>(ci)].parent_nodes.push_back(pi);
        g.items[static_cast<size_t>(ci)].parent_rels.push_back(e.relation);
    }
    return g;
}

void write_scene_graph(const SceneGraph& g, const std::string& path) {
    json r;
    json items = json::array();
    for (const auto& it : g.items) {
        json ji;
        ji["id"] = it.id;
        ji["class"] = kClassNames[it.cls];
        json props;
        for (auto [p, v] : it.props) props[kPropertyNames[p]] = v;
        ji["props"] = std::move(props);
        ji["mask_h"] = it.mask.h;
        ji["mask_w"] = it.mask.w;
        ji["mask"] = rle_encode(it.mask);
        items.push_back(std::move(ji));
    }
    r["items"] = std::move(items);
    json edges = json::array();
    for (const auto& it : g.items)
        for (size_t k = 0; k < it.child_nodes.size(); ++k)
            edges.push_back({{"from", it.id},
                             {"relation", kRelationNames[it.child_rels[k]]},
                             {"to", it.child_nodes[k]}});
    r["edges"] = std::move(edges);
    std::ofstream os(path);
    check(static_cast<bool>(os), "scene graph: cannot write " + path);
    os << r.dump(2) << "\n";
}

SceneGraph read_scene_graph(const std::string& path) {
    std::ifstream is(path);
    check(static_cast<bool>(is), "scene graph: cannot open " + path);
    json r = json::parse(is);
    SceneGraph g;
    for (const auto& ji : r.at("items")) {
        SceneItem it;
        it.id = ji.at("id").get<int>();
        const std::string cname = ji.at("class").get<std::string>();
        for (int c = 0; c < kClassCount; ++c)
            if (cname == kClassNames[c]) it.cls = c;
        check(it.cls >= 0, "scene graph: unknown class " + cname);
        for (auto& [k, v] : ji.at("props").items())
            for (int p = 0; p < kPropertyCount; ++p)
                if (k == kPropertyNames[p]) it.props[p] = v.get<int>();
        it.mask = rle_decode(ji.at("mask").get<std::vector<int>>(), ji.at("mask_h").get<int>(),
                             ji.at("mask_w").get<int>());
        g.items.push_back(std::move(it));
    }
    for (const auto& je : r.at("edges")) {
        const int from = je.at("from").get<int>(), to = je.at("to").get<int>();
        const std::string rname = je.at("relation").get<std::string>();
        int rel = -1;
        for (int x = 0; x < kRelationCount; ++x)
            if (rname == kRelationNames[x]) rel = x;
        check(rel >= 0, "scene graph: unknown relation " + rname);
        g.items[static_cast<size_t>(from)].child_nodes.push_back(to);
        g.items[static_cast<size_t>(from)].child_rels.push_back(rel);
        g.items[static_cast<size_t>(to)].parent_nodes.push_back(from);
        g.items[static_cast<size_t>(to)].parent_rels.push_back(rel);
    }
    return g;
}

// ---- query graphs ----

void QueryGraph::validate() const {
    check(!nodes.empty(), "query: empty graph");
    int retrieves = 0;
    for (const auto& n : nodes) {
        check(n.cls >= 0 && n.cls < kClassCount, "query: node without a valid class");
        check(n.required_count >= 1, "query: quantifier below one");
        if (n.retrieve >= 0) ++retrieves;
        if (n.comp != CompType::none)
            check(n.comp_node >= 0 && n.comp_node < static_cast<int>(nodes.size()),
                  "query: comparison against an unknown node");
        for (auto [p, v] : n.props)
            check(p >= 0 && p < kPropertyCount && v >= 0 && v < kPropertyCard[p],
                  "query: property test out of range");
    }
    for (const auto& e : edges) {
        check(e.from >= 0 && e.from < static_cast<int>(nodes.size()) && e.to >= 0 &&
                  e.to < static_cast<int>(nodes.size()),
              "query: edge references an unknown node");
        check(e.relation >= 0 && e.relation < kRelationCount, "query: unknown relation");
    }
    // acyclic by DFS
    std::vector<int> state(nodes.size(), 0);
    std::function<void(int)> dfs = [&](int n) {
        state[static_cast<size_t>(n)] = 1;
        for (int ei : children_of(n)) {
            const int c = edges[static_cast<size_t>(ei)].to;
            check(state[static_cast<size_t>(c)] != 1, "query: cycle detected");
            if (state[static_cast<size_t>(c)] == 0) dfs(c);
        }
        state[static_cast<size_t>(n)] = 2;
    };
    for (int r : roots()) dfs(r);
    for (int s : state) check(s == 2, "query: disconnected node unreachable from any root");
}

std::vector<int> QueryGraph::children_of(int node) const {
    std::vector<int> out;
    for (size_t i = 0; i < edges.size(); ++i)
        if (edges[i].from == node) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> QueryGraph::roots() const {
    std::vector<bool> is_child(nodes.size(), false);
    for (const auto& e : edges) is_child[static_cast<size_t>(e.to)] = true;
    std::vector<int> out;
    for (size_t i = 0; i < nodes.size(); ++i)
        if (!is_child[i]) out.push_back(static_cast<int>(i));
    return out;
}

void write_query_graph(const QueryGraph& q, const std::string& path) {
    json r;
    json nodes = json::array();
    for (const auto& n : q.nodes) {
        json jn;
        jn["id"] = n.id;
        jn["class"] = kClassNames[n.cls];
        json props = json::array();
        for (auto [p, v] : n.props) props.push_back({{"type", kPropertyNames[p]}, {"value", v}});
        jn["properties"] = std::move(props);
        if (n.retrieve >= 0) jn["retrieve"] = kPropertyNames[n.retrieve];
        jn["quantifier"] = n.require_all ? json("all") : json(n.required_count);
        if (n.set_fn == SetFn::count) jn["set_fn"] = "count";
        if (n.comp != CompType::none) {
            jn["compare"] = n.comp == CompType::same ? "same" : (n.comp == CompType::fewer ? "fewer" : "more");
            jn["compare_node"] = n.comp_node;
        }
        nodes.push_back(std::move(jn));
    }
    r["nodes"] = std::move(nodes);
    json edges = json::array();
    for (const auto& e : q.edges)
        edges.push_back({{"from", e.from}, {"relation", kRelationNames[e.relation]}, {"to", e.to}});
    r["edges"] = std::move(edges);
    std::ofstream os(path);
    check(static_cast<bool>(os), "query: cannot write " + path);
    os << r.dump(2) << "\n";
}

QueryGraph read_query_graph(const std::string& path) {
    std::ifstream is(path);
    check(static_cast<bool>(is), "query: cannot open " + path);
    json r = json::parse(is);
    QueryGraph q;
    for (const auto& jn : r.at("nodes")) {
        QueryNode n;
        n.id = jn.at("id").get<int>();
        const std::string cname = jn.at("class").get<std::string>();
        for (int c = 0; c < kClassCount; ++c)
            if (cname == kClassNames[c]) n.cls = c;
        for (const auto& jp : jn.at("properties")) {
            const std::string pname = jp.at("type").get<std::string>();
            for (int p = 0; p < kPropertyCount; ++p)
                if (pname == kPropertyNames[p]) n.props.emplace_back(p, jp.at("value").get<int>());
        }
        if (jn.contains("retrieve")) {
            const std::string pname = jn.at("retrieve").get<std::string>();
            for (int p = 0; p < kPropertyCount; ++p)
                if (pname == kPropertyNames[p]) n.retrieve = p;
        }
        if (jn.contains("quantifier")) {
            if (jn.at("quantifier").is_string())
                n.require_all = true;
            else
                n.required_count = jn.at("quantifier").get<int>();
        }
        if (jn.contains("set_fn")) n.set_fn = SetFn::count;
        if (jn.contains("compare")) {
            const std::string c = jn.at("compare").get<std::string>();
            n.comp = c == "same" ? CompType::same : (c == "fewer" ? CompType::fewer : CompType::more);
            n.comp_node = jn.at("compare_node").get<int>();
        }
        q.nodes.push_back(std::move(n));
    }
    for (const auto& je : r.at("edges")) {
        QueryEdge e;
        e.from = je.at("from").get<int>();
        e.to = je.at("to").get<int>();
        const std::string rname = je.at("relation").get<std::string>();
        for (int x = 0; x < kRelationCount; ++x)
            if (rname == kRelationNames[x]) e.relation = x;
        q.edges.push_back(e);
    }
    q.validate();
    return q;
}

} // namespace butd
