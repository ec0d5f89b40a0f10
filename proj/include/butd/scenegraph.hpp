#pragma once

#include "butd/miniscene.hpp"

namespace butd {

// Grounded scene description: one entry per extracted component, with the
// (component-id, segmentation-mask) pairing and bidirectional edge lists.
struct SceneItem {
    int id = -1;
    int cls = -1;
    Mask mask;
    std::map<int, int> props;
    std::vector<int> child_nodes, child_rels;
    std::vector<int> parent_nodes, parent_rels;
};

struct SceneGraph {
    std::vector<SceneItem> items;

    // node multiset (class, properties, mask) and edge multiset equality
    bool equivalent(const SceneGraph& other) const;
    std::string diff(const SceneGraph& other) const; // empty when equivalent
};

// The full-structure view of a generated scene: what a complete extraction
// pass should produce (left-of and the two-argument occludes relation are
// not part of the referring inventory and are omitted).
SceneGraph ground_truth_graph(const MiniScene& scene);

void write_scene_graph(const SceneGraph& g, const std::string& path);
SceneGraph read_scene_graph(const std::string& path);

// ---- query structures (Algorithm 2 inputs) ----

enum class SetFn { none, count };
enum class CompType { none, same, fewer, more };

struct QueryNode {
    int id = -1;
    int cls = -1;                              // required class
    std::vector<std::pair<int, int>> props;    // (property type, required value)
    int retrieve = -1;                         // property type to report, -1 none
    int required_count = 1;                    // quantifier: at least this many
    bool require_all = false;                  // every class+property match must satisfy the subtree
    SetFn set_fn = SetFn::none;
    CompType comp = CompType::none;
    int comp_node = -1; // node whose valid-item count this node compares against
};

struct QueryEdge {
    int from = -1;
    int relation = -1;
    int to = -1;
};

struct QueryGraph {
    std::vector<QueryNode> nodes;
    std::vector<QueryEdge> edges;

    void validate() const; // invariants; throws on malformed queries
    std::vector<int> children_of(int node) const;   // edge indices
    std::vector<int> roots() const;                 // nodes that are not edge targets
};

void write_query_graph(const QueryGraph& q, const std::string& path);
QueryGraph read_query_graph(const std::string& path);

} // namespace butd
