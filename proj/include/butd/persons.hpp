#pragma once

#include "butd/datasets.hpp"

namespace butd {

// Constant-feature cardinalities (identity-defining) and variable-feature
// cardinalities (resampled per placement).
namespace person_card {
inline constexpr int kConstant[] = {15, 20, 15, 20, 15, 7, 15, 10, 15, 20, 20, 20, 20, 13};
inline constexpr const char* kConstantNames[] = {
    "face", "skin", "lips", "lip_color", "nose", "ears", "eye_front",
    "iris", "brows", "iris_color", "hair_color", "brow_color", "beard_color", "beard"};
inline constexpr int kVariable[] = {2, 5, 8, 3, 2};
inline constexpr const char* kVariableNames[] = {"tilt", "clothes", "glasses", "hair", "mustache"};
inline constexpr int kNumConstant = 14;
inline constexpr int kNumVariable = 5;
} // namespace person_card

struct PersonSpec {
    int identity = -1;
    std::array<int, person_card::kNumConstant> constant{};
};

// Identity set where every pair shares at least one constant feature.
std::vector<PersonSpec> make_identities(int n, uint64_t seed);

struct PersonPlacement {
    int identity = -1;
    std::array<int, person_card::kNumVariable> variable{};
    int cx = 0, cy = 0; // sprite center
    int depth = 0;      // smaller = nearer
    Mask footprint;     // full sprite pixels
    Mask visible;       // after depth resolution
};

struct PersonsScene {
    std::vector<PersonPlacement> placements;
    int occluding_pair[2] = {-1, -1}; // placement indices, nearer first
};

struct PersonsConfig {
    int n_identities = 6;
    int persons_min = 2, persons_max = 2;
    int count = 100;
    int img_h = 112, img_w = 224;
    uint64_t seed = 0;
    bool occlusion = false;      // build Occlude(x,y) samples instead of property queries
    int examples_per_image = 10; // property samples (or occlusion queries) per image
    bool combined_vocab = false; // single instruction vector over identity x property
    std::set<int> avoid_combos;
    std::vector<int> force_combos; // round-robin planted (identity, slot) pairs
};

struct PersonsData {
    Dataset data;
    std::vector<PersonSpec> identities;
    std::vector<PersonsScene> scenes;
};

// pair key for the exclusion universe: identity x answer-vocabulary slot
int person_combo_key(int identity, int slot);
int person_slot(int prop_type, int value); // global answer index of (type, value)

// Excluded identity-property pairs that always leave at least one value
// per (identity, property type), so presentations stay realizable. Whole
// property types are only withheld in the explicit high-exclusion mode.
std::set<int> choose_person_exclusions(int n_identities, double fraction, uint64_t seed);

PersonsData gen_persons(const PersonsConfig& cfg);

// Renders one sprite onto the image; exposed for the mini-scene generator.
void render_person(Image& img, Mask& footprint, const PersonSpec& spec,
                   const std::array<int, person_card::kNumVariable>& variable, int cx, int cy,
                   int height);

} // namespace butd
