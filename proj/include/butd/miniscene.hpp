#pragma once

#include <map>
#include <tuple>

#include "butd/datasets.hpp"

namespace butd {

// Scene inventories. Persons and scene objects are "main" items reachable
// by extract-next; held objects enter only through holding/on.
namespace scene_inv {
enum Class {
    kMan = 0, kWoman, kGirl, kBoy,
    kBench, kChair, kTrashcan, kStreetlight, kTree,
    kHammer, kHandbag, kSword, kRacket, kSign,
    kClassCount
};
inline constexpr const char* kClassNames[] = {
    "man", "woman", "girl", "boy", "bench", "chair", "trashcan", "streetlight",
    "tree", "hammer", "handbag", "sword", "racket", "sign"};
inline bool is_person(int c) { return c >= kMan && c <= kBoy; }
inline bool is_scene_object(int c) { return c >= kBench && c <= kTree; }
inline bool is_held_object(int c) { return c >= kHammer && c <= kSign; }
inline bool is_main(int c) { return is_person(c) || is_scene_object(c); }

enum Property { kClothes = 0, kHair, kSunglasses, kHat, kSize, kColor, kPropertyCount };
inline constexpr const char* kPropertyNames[] = {"clothes", "hair", "sunglasses", "hat", "size", "color"};
inline constexpr int kPropertyCard[] = {4, 2, 2, 2, 3, 4};
// property applicability follows the item type
std::vector<int> properties_of(int cls);

enum Relation {
    kLeftOf = 0, kRightOf, kBehind, kFacing, kTouching, kHolding, kOn, kOccludes, kClosest,
    kRelationCount
};
inline constexpr const char* kRelationNames[] = {
    "left-of", "right-of", "behind", "facing", "touching", "holding", "on", "occludes", "closest"};
// referring relations queried during full-structure extraction (complements
// left-of/front excluded; occludes is a two-argument relation only)
std::vector<int> referring_relations_of(int cls);
inline bool is_tool_relation(int r) { return r == kHolding || r == kOn; }
} // namespace scene_inv

struct SceneItemRecord {
    int id = -1;
    int cls = -1;
    std::map<int, int> props; // property type -> value
    float cx = 0, cy = 0;
    int depth = 0;   // unique; smaller = nearer to camera
    int orient = 0;  // persons: -1 faces left, +1 faces right
    Mask footprint;
    Mask visible;
    int holder = -1; // held objects: placement that holds it
    int base = -1;   // held objects placed on a scene object
};

struct SceneEdge {
    int subject = -1;
    int relation = -1;
    int object = -1;
    bool operator<(const SceneEdge& o) const {
        return std::tie(subject, relation, object) < std::tie(o.subject, o.relation, o.object);
    }
    bool operator==(const SceneEdge& o) const {
        return subject == o.subject && relation == o.relation && object == o.object;
    }
};

struct MiniScene {
    int img_h = 0, img_w = 0;
    std::vector<SceneItemRecord> items;
    std::vector<SceneEdge> edges; // derived from geometry, functional per (subject, relation)

    const SceneItemRecord* find_edge_target(int subject, int relation) const;
    std::vector<int> main_items_by_depth() const;
};

struct MiniSceneConfig {
    int count = 50;
    int img_h = 56, img_w = 112;
    int persons_min = 2, persons_max = 4;
    int objects_min = 0, objects_max = 2;
    int held_min = 0, held_max = 1;
    float facing_prob = 0.6f;
    float occlude_prob = 0.3f;
    uint64_t seed = 0;
    bool emit_samples = true; // expansion / elaboration training examples
};

struct MiniSceneData {
    std::vector<Image> images;
    std::vector<MiniScene> scenes;
    Dataset expansion;   // extract-next / referring-relation examples
    Dataset elaboration; // property and two-argument relation examples
};

MiniSceneData gen_miniscene(const MiniSceneConfig& cfg);

// expansion task vocabulary: referring relations plus the two extract flags
enum ExpansionFlag { kFlagNextItem = 0, kFlagNextPerson, kFlagRelBase };
int expansion_task_vocab();

// scenes.jsonl round-trip
void write_scenes(const std::vector<MiniScene>& scenes, const std::string& path);
std::vector<MiniScene> read_scenes(const std::string& path);

} // namespace butd
