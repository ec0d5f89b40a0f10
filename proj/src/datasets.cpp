#include "butd/datasets.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include "json.hpp"

namespace butd {

namespace fs = std::filesystem;
using nlohmann::json;

int Dataset::group_index(const std::string& gname) const {
    for (size_t i = 0; i < answer_groups.size(); ++i)
        if (answer_groups[i].name == gname) return static_cast<int>(i);
    fail("dataset: unknown answer group " + gname);
}

uint64_t Dataset::content_hash() const {
    uint64_t h = hash_combine(static_cast<uint64_t>(img_h), static_cast<uint64_t>(img_w));
    for (const auto& img : images) h = hash_combine(h, img.content_hash());
    for (const auto& s : samples) {
        for (int t : s.instr.task) h = hash_combine(h, static_cast<uint64_t>(t) + 1);
        for (int a : s.instr.arg) h = hash_combine(h, static_cast<uint64_t>(a) + 101);
        for (int a : s.instr.arg2) h = hash_combine(h, static_cast<uint64_t>(a) + 201);
        h = hash_combine(h, static_cast<uint64_t>(s.target + 7));
        h = hash_combine(h, static_cast<uint64_t>(s.image_index));
        if (s.target_mask) h = hash_combine(h, s.target_mask->content_hash());
        for (const auto& m : s.aux_masks) h = hash_combine(h, m.content_hash());
        for (int o : s.occurrence) h = hash_combine(h, static_cast<uint64_t>(o) + 301);
    }
    return h;
}

namespace {

// stamp a glyph onto the image with max blending
void blend_glyph(Image& img, const Image& glyph, int top, int left, Mask* footprint = nullptr) {
    for (int y = 0; y < glyph.h; ++y)
        for (int x = 0; x < glyph.w; ++x) {
            const int yy = top + y, xx = left + x;
            if (yy < 0 || yy >= img.h || xx < 0 || xx >= img.w) continue;
            const uint8_t v = glyph.at(y, x);
            if (v > img.at(yy, xx)) img.at(yy, xx) = v;
            if (footprint && v > 32) footprint->at(yy, xx) = 1;
        }
}

} // namespace

Dataset gen_multi_mnist(const GlyphSet& glyphs, const MultiMnistConfig& cfg) {
    check(cfg.positions == 2 || cfg.positions == 4 || cfg.positions == 9,
          "multi_mnist: positions must be 2, 4 or 9");
    check(glyphs.classes() >= 10, "multi_mnist: need 10 glyph classes");
    const int gs = glyphs.glyph_h;
    const int img = cfg.img_size;
    check(img >= 2 * gs, "multi_mnist: image too small for two glyphs");

    // fixed subregion anchors with partial overlap
    std::vector<std::pair<int, int>> anchors;
    const int lo = img / 14;            // small inset
    const int hi = img - gs - lo;
    const int mid = (lo + hi) / 2;
    if (cfg.positions == 2) {
        anchors = {{lo, lo}, {hi, hi}};
    } else if (cfg.positions == 4) {
        anchors = {{lo, lo}, {lo, hi}, {hi, lo}, {hi, hi}};
    } else {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c)
                anchors.emplace_back(r == 0 ? lo : (r == 1 ? mid : hi), c == 0 ? lo : (c == 1 ? mid : hi));
    }

    Dataset d;
    d.name = strfmt("multi_mnist_p%d", cfg.positions);
    d.img_h = d.img_w = img;
    d.task_vocab = cfg.positions; // the task selects a location
    d.arg_vocab = 1;
    d.occ_vocab = 10;
    d.answer_vocab = 10;
    d.answer_groups = {{"digit", 0, 10}};

    for (int i = 0; i < cfg.count; ++i) {
        Rng rng = Rng::fork(cfg.seed, static_cast<uint64_t>(i));
        Image image(img, img);
        std::vector<int> digits(anchors.size());
        std::vector<Mask> masks;
        std::vector<int> occ;
        for (size_t p = 0; p < anchors.size(); ++p) {
            digits[p] = rng.uniform_int(10);
            Mask fp(img, img);
            blend_glyph(image, glyphs.pick(digits[p], rng), anchors[p].first, anchors[p].second, &fp);
            masks.push_back(std::move(fp));
        }
        for (int c = 0; c < 10; ++c)
            if (std::find(digits.begin(), digits.end(), c) != digits.end()) occ.push_back(c);

        const int image_index = static_cast<int>(d.images.size());
        d.images.push_back(std::move(image));
        d.image_pairs.emplace_back();
        for (size_t p = 0; p < anchors.size(); ++p) {
            Sample s;
            s.image_index = image_index;
            s.instr = Instruction::of(static_cast<int>(p));
            s.target = digits[p];
            s.target_mask = masks[p];
            s.occurrence = occ;
            d.samples.push_back(std::move(s));
        }
    }
    return d;
}

int char_pair_key(int left_class, int right_class, int alphabet) {
    return left_class * alphabet + right_class;
}

CharGridData gen_char_grid(const GlyphSet& glyphs, const CharGridConfig& cfg) {
    check(cfg.n_chars == 6 || cfg.n_chars == 24, "char_grid: n_chars must be 6 or 24");
    check(cfg.n_chars <= cfg.alphabet, strfmt("char_grid: %d chars exceed alphabet %d", cfg.n_chars, cfg.alphabet));
    check(glyphs.classes() >= cfg.alphabet, "char_grid: glyph set smaller than alphabet");

    const int cols = cfg.n_chars == 6 ? 3 : 6;
    const int rows = cfg.n_chars == 6 ? 2 : 4;
    const int gs = glyphs.glyph_h;
    check(cols * gs <= cfg.img_w && rows * gs <= cfg.img_h,
          strfmt("char_grid: %dx%d grid of %dpx glyphs does not fit %dx%d", cols, rows, gs, cfg.img_w, cfg.img_h));
    const int mx = (cfg.img_w - cols * gs) / 2;
    const int my = (cfg.img_h - rows * gs) / 2;
    const int none_token = cfg.alphabet; // reserved last index

    CharGridData out;
    Dataset& d = out.data;
    d.name = strfmt("char_grid_%d", cfg.n_chars);
    d.img_h = cfg.img_h;
    d.img_w = cfg.img_w;
    d.task_vocab = kCharTaskCount;
    d.arg_vocab = cfg.alphabet;
    d.occ_vocab = cfg.alphabet;
    d.answer_vocab = cfg.alphabet + 1;
    d.answer_groups = {{"char", 0, cfg.alphabet + 1}};
    d.aux_channels = cfg.location_tasks ? 1 : 0;

    std::vector<int> deck(static_cast<size_t>(cfg.alphabet));
    for (int i = 0; i < cfg.alphabet; ++i) deck[static_cast<size_t>(i)] = i;

    for (int i = 0; i < cfg.count; ++i) {
        Rng rng = Rng::fork(cfg.seed, static_cast<uint64_t>(i));

        // non-repeating characters; retried until no avoided adjacency appears
        std::vector<int> chars;
        const int forced = cfg.force_pairs.empty()
                               ? -1
                               : cfg.force_pairs[static_cast<size_t>(i) % cfg.force_pairs.size()];
        for (int attempt = 0;; ++attempt) {
            check(attempt < 4096, "char_grid: cannot satisfy adjacency constraints");
            std::vector<int> cand = deck;
            rng.shuffle(cand);
            cand.resize(static_cast<size_t>(cfg.n_chars));
            if (forced >= 0) {
                const int l = forced / cfg.alphabet, r = forced % cfg.alphabet;
                // plant the forced pair at a random row start
                auto move_to = [&](int cls, size_t pos) {
                    auto it = std::find(cand.begin(), cand.end(), cls);
                    if (it == cand.end()) {
                        // swap in from outside, replacing a non-planted slot
                        cand[pos] = cls;
                    } else {
                        std::swap(cand[pos], *it);
                    }
                };
                const int row = rng.uniform_int(rows);
                const int col = rng.uniform_int(cols - 1);
                const size_t base = static_cast<size_t>(row * cols + col);
                move_to(l, base);
                move_to(r, base + 1);
                // the swaps may have produced duplicates; reject if so
                std::vector<int> sorted = cand;
                std::sort(sorted.begin(), sorted.end());
                if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) continue;
            }
            bool ok = true;
            for (int r = 0; r < rows && ok; ++r)
                for (int c = 0; c + 1 < cols && ok; ++c) {
                    const int key = char_pair_key(cand[static_cast<size_t>(r * cols + c)],
                                                  cand[static_cast<size_t>(r * cols + c + 1)], cfg.alphabet);
                    if (cfg.avoid_pairs.count(key)) ok = false;
                }
            if (ok) {
                chars = std::move(cand);
                break;
            }
        }

        Image image(cfg.img_h, cfg.img_w);
        std::vector<std::pair<float, float>> centers(chars.size());
        std::vector<Mask> footprints;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c) {
                const size_t k = static_cast<size_t>(r * cols + c);
                Mask fp(cfg.img_h, cfg.img_w);
                const int top = my + r * gs;
                const int left = mx + c * gs;
                blend_glyph(image, glyphs.pick(chars[k], rng), top, left, &fp);
                centers[k] = {static_cast<float>(left) + gs / 2.0f, static_cast<float>(top) + gs / 2.0f};
                footprints.push_back(std::move(fp));
            }
        out.truths.push_back({cols, rows, chars, centers});

        const int image_index = static_cast<int>(d.images.size());
        d.images.push_back(std::move(image));
        std::vector<int> pairs;
        for (int r = 0; r < rows; ++r)
            for (int c = 0; c + 1 < cols; ++c)
                pairs.push_back(char_pair_key(chars[static_cast<size_t>(r * cols + c)],
                                              chars[static_cast<size_t>(r * cols + c + 1)], cfg.alphabet));
        d.image_pairs.push_back(pairs);

        std::vector<int> occ = chars;
        std::sort(occ.begin(), occ.end());

        auto neighbor = [&](size_t k, int dir) -> int { // dir +1 right, -1 left
            const int r = static_cast<int>(k) / cols, c = static_cast<int>(k) % cols;
            const int nc = c + dir;
            if (nc < 0 || nc >= cols) return -1;
            return static_cast<int>(static_cast<size_t>(r * cols + nc));
        };

        Rng srng = Rng::fork(hash_combine(cfg.seed, 0xabcde), static_cast<uint64_t>(i));
        for (int e = 0; e < cfg.examples_per_image; ++e) {
            size_t k;
            int dir;
            if (forced >= 0 && e == 0) {
                // query exactly the planted pair
                const int l = forced / cfg.alphabet;
                k = static_cast<size_t>(std::find(chars.begin(), chars.end(), l) - chars.begin());
                dir = 1;
            } else {
                k = static_cast<size_t>(srng.uniform_int(cfg.n_chars));
                dir = srng.coin() ? 1 : -1;
            }
            const int nb = neighbor(k, dir);
            Sample s;
            s.image_index = image_index;
            s.instr = Instruction::of(dir > 0 ? kTaskRightOf : kTaskLeftOf, chars[k]);
            s.target = nb < 0 ? none_token : chars[static_cast<size_t>(nb)];
            s.target_mask = nb < 0 ? footprints[k] : footprints[static_cast<size_t>(nb)];
            s.occurrence = occ;
            s.entity = chars[k];
            if (nb >= 0) {
                const int l = dir > 0 ? chars[k] : chars[static_cast<size_t>(nb)];
                const int r = dir > 0 ? chars[static_cast<size_t>(nb)] : chars[k];
                s.pair_key = char_pair_key(l, r, cfg.alphabet);
            }
            if (cfg.location_tasks) s.aux_masks.emplace_back(cfg.img_h, cfg.img_w); // zeros
            d.samples.push_back(std::move(s));
        }

        if (cfg.location_tasks) {
            auto center_mask = [&](std::pair<float, float> cpos) {
                Mask m(cfg.img_h, cfg.img_w);
                const int r = std::max(2, gs / 6);
                for (int y = -r; y <= r; ++y)
                    for (int x = -r; x <= r; ++x) {
                        const int yy = static_cast<int>(cpos.second) + y;
                        const int xx = static_cast<int>(cpos.first) + x;
                        if (yy >= 0 && yy < cfg.img_h && xx >= 0 && xx < cfg.img_w && y * y + x * x <= r * r)
                            m.at(yy, xx) = 1;
                    }
                return m;
            };
            auto norm_xy = [&](std::pair<float, float> cpos) {
                return std::array<float, 2>{cpos.first / static_cast<float>(cfg.img_w),
                                            cpos.second / static_cast<float>(cfg.img_h)};
            };
            const bool relation_ok_only = !cfg.relation_train_classes.empty();
            const int stride = std::max(1, cfg.location_stride);
            for (size_t k = 0; k < chars.size(); ++k) {
                if ((static_cast<int>(k) + i) % stride != 0) continue;
                // <locate, c>: answer is the char's own class, location head
                // learns its centroid
                Sample loc;
                loc.image_index = image_index;
                loc.instr = Instruction::of(kTaskLocate, chars[k]);
                loc.target = chars[k];
                loc.target_xy = norm_xy(centers[k]);
                loc.has_xy = true;
                loc.target_mask = footprints[k];
                loc.occurrence = occ;
                loc.entity = chars[k];
                loc.aux_masks.emplace_back(cfg.img_h, cfg.img_w);
                d.samples.push_back(std::move(loc));

                // <classify-location, map>: class of the char under the map
                Sample cl;
                cl.image_index = image_index;
                cl.instr = Instruction::of(kTaskClassifyLoc);
                cl.target = chars[k];
                cl.occurrence = occ;
                cl.entity = chars[k];
                cl.aux_masks.push_back(center_mask(centers[k]));
                d.samples.push_back(std::move(cl));

                // <right-of-location, map> and <left-of-location, map>:
                // restricted to the relation-training alphabet when given
                if (relation_ok_only &&
                    std::find(cfg.relation_train_classes.begin(), cfg.relation_train_classes.end(),
                              chars[k]) == cfg.relation_train_classes.end())
                    continue;
                for (int dir : {1, -1}) {
                    const int nb = neighbor(k, dir);
                    Sample rel;
                    rel.image_index = image_index;
                    rel.instr = Instruction::of(dir > 0 ? kTaskRightOfLoc : kTaskLeftOfLoc);
                    rel.occurrence = occ;
                    rel.entity = chars[k];
                    rel.aux_masks.push_back(center_mask(centers[k]));
                    if (nb < 0) {
                        rel.target = none_token;
                    } else {
                        rel.target = chars[static_cast<size_t>(nb)]; // not scored; marks has-neighbor
                        rel.target_xy = norm_xy(centers[static_cast<size_t>(nb)]);
                        rel.has_xy = true;
                    }
                    d.samples.push_back(std::move(rel));
                }
            }
        }
    }
    return out;
}

std::set<int> choose_excluded_pairs(const std::vector<int>& universe, double fraction, uint64_t seed) {
    check(fraction >= 0.0 && fraction < 1.0, "exclusion: fraction must be in [0,1)");
    std::set<int> out;
    if (fraction == 0.0 || universe.empty()) return out;
    const int want = std::max(1, static_cast<int>(std::floor(fraction * static_cast<double>(universe.size()))));
    std::vector<int> pool = universe;
    Rng rng(hash_combine(seed, 0xec5u));
    rng.shuffle(pool);
    for (int i = 0; i < want; ++i) out.insert(pool[static_cast<size_t>(i)]);
    return out;
}

ExclusionSplit make_exclusion_split(const Dataset& data, const std::vector<int>& universe,
                                    double fraction, uint64_t seed, double val_fraction) {
    ExclusionSplit split;
    split.universe = universe;
    split.excluded = choose_excluded_pairs(universe, fraction, seed);

    auto image_clean = [&](int idx) {
        for (int k : data.image_pairs[static_cast<size_t>(idx)])
            if (split.excluded.count(k)) return false;
        return true;
    };

    Manifest clean;
    for (int i = 0; i < static_cast<int>(data.samples.size()); ++i) {
        const Sample& s = data.samples[static_cast<size_t>(i)];
        if (s.pair_key >= 0 && split.excluded.count(s.pair_key)) {
            split.test.push_back(i);
        } else if (image_clean(s.image_index)) {
            clean.push_back(i);
        }
        // samples of tainted images that do not themselves query an excluded
        // pair are dropped entirely
    }
    const int val_count = static_cast<int>(static_cast<double>(clean.size()) * val_fraction);
    Rng rng(hash_combine(seed, 0x5417u));
    rng.shuffle(clean);
    split.val.assign(clean.begin(), clean.begin() + val_count);
    split.train.assign(clean.begin() + val_count, clean.end());
    std::sort(split.val.begin(), split.val.end());
    std::sort(split.train.begin(), split.train.end());

    // soundness: exhaustive scan
    for (int i : split.train) {
        const Sample& s = data.samples[static_cast<size_t>(i)];
        check(s.pair_key < 0 || !split.excluded.count(s.pair_key), "exclusion: train sample realizes an excluded pair");
        check(image_clean(s.image_index), "exclusion: train image contains an excluded pair");
    }
    for (int i : split.val) {
        const Sample& s = data.samples[static_cast<size_t>(i)];
        check(s.pair_key < 0 || !split.excluded.count(s.pair_key), "exclusion: val sample realizes an excluded pair");
    }
    check(!split.excluded.empty() || split.test.empty(), "exclusion: unexpected test samples");
    check(split.excluded.empty() || !split.train.empty(), "exclusion: fraction left training empty");
    // coverage: every excluded pair must be queried at least once
    std::set<int> covered;
    for (int i : split.test) covered.insert(data.samples[static_cast<size_t>(i)].pair_key);
    for (int k : split.excluded)
        check(covered.count(k), strfmt("exclusion: pair %d has no generalization-test sample", k));
    return split;
}

// ---------------- dataset io ----------------

namespace {

json mask_to_json(const Mask& m) { return json(rle_encode(m)); }

Mask mask_from_json(const json& j, int h, int w) {
    return rle_decode(j.get<std::vector<int>>(), h, w);
}

} // namespace

void write_dataset(const Dataset& data, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    json manifest;
    manifest["name"] = data.name;
    manifest["img_h"] = data.img_h;
    manifest["img_w"] = data.img_w;
    manifest["task_vocab"] = data.task_vocab;
    manifest["arg_vocab"] = data.arg_vocab;
    manifest["occ_vocab"] = data.occ_vocab;
    manifest["answer_vocab"] = data.answer_vocab;
    manifest["aux_channels"] = data.aux_channels;
    manifest["images"] = data.images.size();
    manifest["samples"] = data.samples.size();
    manifest["content_hash"] = strfmt("%016llx", static_cast<unsigned long long>(data.content_hash()));
    json groups = json::array();
    for (const auto& g : data.answer_groups)
        groups.push_back({{"name", g.name}, {"offset", g.offset}, {"size", g.size}});
    manifest["answer_groups"] = groups;
    manifest["image_pairs"] = data.image_pairs;
    {
        std::ofstream os(fs::path(dir) / "manifest.json");
        check(static_cast<bool>(os), "dataset: cannot write manifest in " + dir);
        os << manifest.dump(2) << "\n";
    }
    for (size_t i = 0; i < data.images.size(); ++i)
        write_png(data.images[i], (fs::path(dir) / "images" / strfmt("%06zu.png", i)).string());

    std::ofstream os(fs::path(dir) / "labels.jsonl");
    check(static_cast<bool>(os), "dataset: cannot write labels in " + dir);
    for (const auto& s : data.samples) {
        json r;
        r["image"] = s.image_index;
        r["task"] = s.instr.task;
        r["arg"] = s.instr.arg;
        if (!s.instr.arg2.empty()) r["arg2"] = s.instr.arg2;
        r["target"] = s.target;
        r["group"] = s.answer_group;
        if (s.has_xy) r["target_xy"] = {s.target_xy[0], s.target_xy[1]};
        r["occurrence"] = s.occurrence;
        if (s.entity >= 0) r["entity"] = s.entity;
        if (s.pair_key >= 0) r["pair"] = s.pair_key;
        if (s.target_mask) r["mask"] = mask_to_json(*s.target_mask);
        if (!s.aux_masks.empty()) {
            json aux = json::array();
            for (const auto& m : s.aux_masks) aux.push_back(mask_to_json(m));
            r["aux"] = aux;
        }
        os << r.dump() << "\n";
    }
}

Dataset read_dataset(const std::string& dir) {
    std::ifstream ms(fs::path(dir) / "manifest.json");
    check(static_cast<bool>(ms), "dataset: missing manifest.json in " + dir);
    json manifest = json::parse(ms);

    Dataset d;
    d.name = manifest.at("name").get<std::string>();
    d.img_h = manifest.at("img_h").get<int>();
    d.img_w = manifest.at("img_w").get<int>();
    d.task_vocab = manifest.at("task_vocab").get<int>();
    d.arg_vocab = manifest.at("arg_vocab").get<int>();
    d.occ_vocab = manifest.at("occ_vocab").get<int>();
    d.answer_vocab = manifest.at("answer_vocab").get<int>();
    d.aux_channels = manifest.at("aux_channels").get<int>();
    for (const auto& g : manifest.at("answer_groups"))
        d.answer_groups.push_back({g.at("name").get<std::string>(), g.at("offset").get<int>(), g.at("size").get<int>()});
    d.image_pairs = manifest.at("image_pairs").get<std::vector<std::vector<int>>>();

    const size_t n_images = manifest.at("images").get<size_t>();
    for (size_t i = 0; i < n_images; ++i)
        d.images.push_back(read_png((fs::path(dir) / "images" / strfmt("%06zu.png", i)).string()));

    std::ifstream ls(fs::path(dir) / "labels.jsonl");
    check(static_cast<bool>(ls), "dataset: missing labels.jsonl in " + dir);
    std::string line;
    while (std::getline(ls, line)) {
        if (line.empty()) continue;
        json r = json::parse(line);
        Sample s;
        s.image_index = r.at("image").get<int>();
        s.instr.task = r.at("task").get<std::vector<int>>();
        s.instr.arg = r.at("arg").get<std::vector<int>>();
        if (r.contains("arg2")) s.instr.arg2 = r.at("arg2").get<std::vector<int>>();
        s.target = r.at("target").get<int>();
        s.answer_group = r.at("group").get<int>();
        if (r.contains("target_xy")) {
            s.target_xy = {r.at("target_xy")[0].get<float>(), r.at("target_xy")[1].get<float>()};
            s.has_xy = true;
        }
        s.occurrence = r.at("occurrence").get<std::vector<int>>();
        if (r.contains("entity")) s.entity = r.at("entity").get<int>();
        if (r.contains("pair")) s.pair_key = r.at("pair").get<int>();
        if (r.contains("mask")) s.target_mask = mask_from_json(r.at("mask"), d.img_h, d.img_w);
        if (r.contains("aux"))
            for (const auto& a : r.at("aux")) s.aux_masks.push_back(mask_from_json(a, d.img_h, d.img_w));
        d.samples.push_back(std::move(s));
    }
    const std::string want = manifest.at("content_hash").get<std::string>();
    const std::string got = strfmt("%016llx", static_cast<unsigned long long>(d.content_hash()));
    check(want == got, "dataset: content hash mismatch in " + dir);
    return d;
}

} // namespace butd
