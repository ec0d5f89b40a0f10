#pragma once

// Brute-force reference implementations used by unit and acceptance tests.
// Everything here is independent of the interpreter under test: matching
// works directly on generated scene records.

#include "butd/scenegraph.hpp"

namespace butd::oracles {

// Exhaustive subgraph matcher over the ground-truth scene record. Mirrors
// the documented query semantics: candidates for roots are main items,
// relation children follow the scene's (functional) edges, bindings are
// injective along one assignment path, quantifiers count satisfying
// candidates.
bool brute_force_query_match(const MiniScene& scene, const QueryGraph& query);

// Random query generator: draws positive queries from the scene's own
// structure and negatives by perturbing them.
QueryGraph random_query(const MiniScene& scene, Rng& rng, bool want_positive);

// Independent re-derivation of geometric relation edges (same definitions,
// separate code path) for generator verification.
std::vector<SceneEdge> derive_edges_reference(const MiniScene& scene);

} // namespace butd::oracles
