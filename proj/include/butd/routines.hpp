#pragma once

#include <memory>

#include "butd/model.hpp"
#include "butd/scenegraph.hpp"

namespace butd {

// ---- mask post-processing ----
struct MaskCandidates {
    struct Candidate {
        Mask mask;
        double avg_score = 0;
    };
    std::vector<Candidate> candidates;
    Mask selected; // empty mask means "no item"
};

// threshold, morphological opening, connected components, then pick the
// component with the highest average pixel score (sub-element and
// tiny components are dropped)
MaskCandidates postprocess_mask(const Tensor& score_map, float threshold, int min_pixels = 4);

// argmax-IoU item index, or -1 when the best IoU is below the threshold
int match_item_by_iou(const Mask& mask, const SceneGraph& graph, double threshold);

// ---- perception backends ----
// Answer classes use scene_inv ids; kNoItem is the reserved "none" token.
inline constexpr int kNoItem = scene_inv::kClassCount;

class PerceptionBackend {
public:
    virtual ~PerceptionBackend() = default;
    // expansion network: add an item by flag (next_item / next_person /
    // referring relation); ref is the cumulative or reference mask
    virtual std::pair<int, Mask> expansion_query(const Image& image, const Mask& ref, int flag) = 0;
    // elaboration network: property value for flag in [0, kPropertyCount),
    // or a two-argument relation verdict (occludes: 0 occluder / 1 occluded /
    // 2 none; facing: 0/1)
    virtual int elaboration_query(const Image& image, const Mask& m1, const Mask& m2, int flag) = 0;
};

// flags for expansion_query
inline constexpr int kQueryNextItem = -1;
inline constexpr int kQueryNextPerson = -2;
inline constexpr int kElabOccludes = scene_inv::kPropertyCount;
inline constexpr int kElabFacing = scene_inv::kPropertyCount + 1;

// Deterministic ground-truth backend over a generated scene.
std::unique_ptr<PerceptionBackend> make_oracle_backend(const MiniScene& scene);

// Backend running two trained counter-stream models.
struct TrainedBackendConfig {
    float seg_threshold = 0.5f;
    int min_pixels = 4;
};
std::unique_ptr<PerceptionBackend> make_trained_backend(const CounterStreamModel& expansion,
                                                        const CounterStreamModel& elaboration,
                                                        TrainedBackendConfig cfg = {});

// ---- the two extraction algorithms ----
struct RoutineConfig {
    int max_items = 12;
    double iou_match_threshold = 0.5;
};

// full-structure extraction: extract-next loop, property elaboration,
// relation pass with tool-item addition, bidirectional edges
SceneGraph extract_full_structure(PerceptionBackend& backend, const Image& image,
                                  const RoutineConfig& cfg = {});

struct QueryResult {
    bool success = false;
    int answer = -1;       // retrieved property value / set count / comparison verdict
    SceneGraph retrieved;  // grounded structure built along the way
};

// guided extraction: recursive DFS over the query graph with candidate
// iteration, property validation, relation expansion, quantifiers, set
// functions and count comparisons
QueryResult ground_query(PerceptionBackend& backend, const Image& image, const QueryGraph& query,
                         const RoutineConfig& cfg = {});

// ---- generalization via location (3-step relation pipeline) ----
class LocationPipelineBackend {
public:
    virtual ~LocationPipelineBackend() = default;
    // <location, class> -> normalized q1; nullopt if the class is absent
    virtual std::optional<std::pair<float, float>> locate(const Image& image, int cls) = 0;
    // <right-of|left-of, q1> -> normalized q2; nullopt means no neighbor
    virtual std::optional<std::pair<float, float>> neighbor_location(const Image& image,
                                                                     std::pair<float, float> q,
                                                                     bool right) = 0;
    // <classify-location, q2> -> class
    virtual int classify_at(const Image& image, std::pair<float, float> q) = 0;
};

// composes the three steps; returns the class at the predicted location or
// `none_token` when step 2 reports no neighbor. Step failures throw with
// the failing step index.
int relation_via_location(LocationPipelineBackend& backend, const Image& image, bool right_of,
                          int ref_class, int none_token);

// trained-model pipeline over a char-grid task vocabulary
std::unique_ptr<LocationPipelineBackend> make_trained_location_backend(const CounterStreamModel& model,
                                                                       int map_radius);

} // namespace butd
