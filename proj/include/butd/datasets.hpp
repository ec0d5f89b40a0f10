#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "butd/glyphs.hpp"
#include "butd/image.hpp"

namespace butd {

// A TD instruction in symbolic form: multi-hot task and argument slots
// plus an optional second argument (two-argument relations) and optional
// spatial-map arguments carried as auxiliary input channels.
struct Instruction {
    std::vector<int> task;
    std::vector<int> arg;
    std::vector<int> arg2;

    bool empty() const { return task.empty() && arg.empty() && arg2.empty(); }
    static Instruction of(int t) { return Instruction{{t}, {}, {}}; }
    static Instruction of(int t, int a) { return Instruction{{t}, {a}, {}}; }
};

struct Sample {
    int image_index = -1;
    Instruction instr;
    int target = -1;                  // answer-vocabulary index
    int answer_group = 0;             // which answer segment `target` lives in
    std::array<float, 2> target_xy{-1.0f, -1.0f}; // normalized location target
    bool has_xy = false;
    std::optional<Mask> target_mask;
    std::vector<Mask> aux_masks;      // input-side maps, in channel order
    std::vector<int> occurrence;      // indices present (multi-hot)
    int entity = -1;                  // reference entity (identity / char class)
    int pair_key = -1;                // realized exclusion-universe pair, -1 if n/a
};

// Named contiguous segment of the answer vocabulary.
struct AnswerGroup {
    std::string name;
    int offset = 0;
    int size = 0;
};

struct Dataset {
    std::string name;
    int img_h = 0, img_w = 0;
    int task_vocab = 0;
    int arg_vocab = 0;
    int occ_vocab = 0;
    int answer_vocab = 0;
    int aux_channels = 0; // input map channels every sample provides (zeros allowed)
    std::vector<AnswerGroup> answer_groups;
    std::vector<Image> images;
    std::vector<std::vector<int>> image_pairs; // exclusion pairs realized by each image
    std::vector<Sample> samples;

    int group_index(const std::string& gname) const;
    uint64_t content_hash() const;
};

using Manifest = std::vector<int>; // sample indices

// ---- Multi-MNIST ----
struct MultiMnistConfig {
    int positions = 2; // 2, 4 or 9
    int count = 100;   // images
    int img_size = 56;
    uint64_t seed = 0;
};
Dataset gen_multi_mnist(const GlyphSet& glyphs, const MultiMnistConfig& cfg);

// ---- Character grids (rows of glyphs with left/right neighbor truth) ----
struct CharGridConfig {
    int n_chars = 6;        // 6 -> 3x2 grid, 24 -> 6x4 grid
    int alphabet = 29;
    int count = 100;        // images
    int examples_per_image = 5;
    int img_h = 56, img_w = 112;
    uint64_t seed = 0;
    bool location_tasks = false; // add location / neighbor-of-location / classify-location
    int location_stride = 1;     // emit location samples for every k-th char of an image
    // chars whose location-task instructions may be used for the
    // relation step (generalization-via-location protocol)
    std::vector<int> relation_train_classes;
    std::set<int> avoid_pairs;            // adjacency keys to keep out of every image
    std::vector<int> force_pairs;         // round-robin: image i embeds force_pairs[i % n]
};
// task vocabulary for char grids
enum CharTask { kTaskRightOf = 0, kTaskLeftOf, kTaskLocate, kTaskRightOfLoc, kTaskLeftOfLoc, kTaskClassifyLoc, kCharTaskCount };

// layout ground truth, one record per generated image
struct CharGridTruth {
    int cols = 0, rows = 0;
    std::vector<int> chars;                         // row-major grid order
    std::vector<std::pair<float, float>> centers;   // pixel coordinates
};

struct CharGridData {
    Dataset data;
    std::vector<CharGridTruth> truths;
};

CharGridData gen_char_grid(const GlyphSet& glyphs, const CharGridConfig& cfg);
int char_pair_key(int left_class, int right_class, int alphabet);

// ---- Exclusion splits ----
struct ExclusionSplit {
    std::vector<int> universe;  // all pair keys
    std::set<int> excluded;
    Manifest train;
    Manifest val;
    Manifest test; // generalization: every sample realizes an excluded pair
};

// Uniformly selects max(1, floor(fraction*|universe|)) pairs (0 when
// fraction == 0), deterministically per seed.
std::set<int> choose_excluded_pairs(const std::vector<int>& universe, double fraction, uint64_t seed);

// Partitions a sample pool: train = samples of images that realize no
// excluded pair, test = samples whose own (instruction, answer) realizes an
// excluded pair, val = a held-out slice of non-excluded samples. Verifies
// the soundness and coverage invariants.
ExclusionSplit make_exclusion_split(const Dataset& data, const std::vector<int>& universe,
                                    double fraction, uint64_t seed, double val_fraction = 0.05);

// ---- dataset directory io ----
// Layout: manifest.json, images/NNNNNN.png, labels.jsonl (and scenes.jsonl
// written by the mini-scene generator).
void write_dataset(const Dataset& data, const std::string& dir);
Dataset read_dataset(const std::string& dir);

} // namespace butd
