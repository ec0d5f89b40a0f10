#include "butd/persons.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace butd {

namespace {

void put(Image& img, Mask& fp, int y, int x, uint8_t v) {
    if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
    img.at(y, x) = v;
    fp.at(y, x) = 1;
}

void fill_rect(Image& img, Mask& fp, int y0, int x0, int y1, int x1, uint8_t v) {
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) put(img, fp, y, x, v);
}

void fill_ellipse(Image& img, Mask& fp, int cy, int cx, int ry, int rx, uint8_t v) {
    for (int y = -ry; y <= ry; ++y)
        for (int x = -rx; x <= rx; ++x) {
            const double e = static_cast<double>(x) * x / (static_cast<double>(rx) * rx) +
                             static_cast<double>(y) * y / (static_cast<double>(ry) * ry);
            if (e <= 1.0) put(img, fp, cy + y, cx + x, v);
        }
}

} // namespace

int person_slot(int prop_type, int value) {
    int off = 0;
    for (int t = 0; t < prop_type; ++t) off += person_card::kVariable[t];
    return off + value;
}

int person_combo_key(int identity, int slot) {
    int vocab = 0;
    for (int t = 0; t < person_card::kNumVariable; ++t) vocab += person_card::kVariable[t];
    return identity * vocab + slot;
}

std::set<int> choose_person_exclusions(int n_identities, double fraction, uint64_t seed) {
    check(fraction >= 0.0 && fraction < 1.0, "persons: exclusion fraction must be in [0,1)");
    std::vector<int> pool;
    for (int id = 0; id < n_identities; ++id)
        for (int t = 0; t < person_card::kNumVariable; ++t)
            for (int v = 0; v < person_card::kVariable[t]; ++v)
                pool.push_back(person_combo_key(id, person_slot(t, v)));
    std::set<int> out;
    if (fraction == 0.0) return out;
    const int want = std::max(1, static_cast<int>(std::floor(fraction * static_cast<double>(pool.size()))));
    Rng rng(hash_combine(seed, 0xec5u));
    rng.shuffle(pool);
    std::map<std::pair<int, int>, int> left; // (identity, type) -> values still allowed
    for (int id = 0; id < n_identities; ++id)
        for (int t = 0; t < person_card::kNumVariable; ++t) left[{id, t}] = person_card::kVariable[t];
    const int n_slots = person_slot(person_card::kNumVariable - 1,
                                    person_card::kVariable[person_card::kNumVariable - 1] - 1) + 1;
    for (int key : pool) {
        if (static_cast<int>(out.size()) >= want) break;
        const int id = key / n_slots;
        int slot = key % n_slots, t = 0;
        while (slot >= person_card::kVariable[t]) slot -= person_card::kVariable[t++];
        auto& remaining = left[{id, t}];
        if (remaining <= 1) continue; // keep the type realizable
        --remaining;
        out.insert(key);
    }
    return out;
}

std::vector<PersonSpec> make_identities(int n, uint64_t seed) {
    Rng rng(hash_combine(seed, 0x9e55u));
    std::vector<PersonSpec> ids(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        ids[static_cast<size_t>(i)].identity = i;
        for (int f = 0; f < person_card::kNumConstant; ++f)
            ids[static_cast<size_t>(i)].constant[static_cast<size_t>(f)] =
                rng.uniform_int(person_card::kConstant[f]);
        // force a shared constant feature with every earlier identity
        for (int j = 0; j < i; ++j) {
            bool shared = false;
            for (int f = 0; f < person_card::kNumConstant; ++f)
                if (ids[static_cast<size_t>(i)].constant[static_cast<size_t>(f)] ==
                    ids[static_cast<size_t>(j)].constant[static_cast<size_t>(f)])
                    shared = true;
            if (!shared) {
                const int f = rng.uniform_int(person_card::kNumConstant);
                ids[static_cast<size_t>(i)].constant[static_cast<size_t>(f)] =
                    ids[static_cast<size_t>(j)].constant[static_cast<size_t>(f)];
            }
        }
    }
    return ids;
}

void render_person(Image& img, Mask& fp, const PersonSpec& spec,
                   const std::array<int, person_card::kNumVariable>& var, int cx, int cy,
                   int height) {
    const auto& c = spec.constant;
    const int tilt = var[0], clothes = var[1], glasses = var[2], hair = var[3], mustache = var[4];

    const int ph = height;
    const int head_ry = ph * 26 / 100;
    const int head_rx = head_ry * (70 + c[0] * 2) / 100; // face shape: 15 aspect variants
    const int head_cy = cy - ph / 2 + head_ry + ph / 12;
    const int head_cx = cx + (tilt == 0 ? -head_rx / 5 : head_rx / 5); // face tilt: 2 values
    const uint8_t skin = static_cast<uint8_t>(120 + c[1] * 6);         // 20 tones

    // shoulders / clothes, 5 patterns
    const int sh_top = head_cy + head_ry - ph / 24;
    const int sh_bot = cy + ph / 2;
    const int sh_rx = head_rx * 2;
    const uint8_t cloth_a = 70, cloth_b = 180;
    for (int y = sh_top; y <= sh_bot; ++y) {
        const int grow = (y - sh_top) * sh_rx / std::max(1, sh_bot - sh_top);
        const int half = head_rx / 2 + grow;
        for (int x = cx - half; x <= cx + half; ++x) {
            uint8_t v = cloth_a;
            switch (clothes) {
            case 0: v = cloth_a; break;
            case 1: v = cloth_b; break;
            case 2: v = (y / 3) % 2 ? cloth_a : cloth_b; break;           // horizontal stripes
            case 3: v = (x / 3) % 2 ? cloth_a : cloth_b; break;           // vertical stripes
            default: v = ((x / 3) + (y / 3)) % 2 ? cloth_a : cloth_b; break; // checker
            }
            put(img, fp, y, x, v);
        }
    }
    // neck
    fill_rect(img, fp, head_cy + head_ry - ph / 16, cx - head_rx / 4, sh_top + ph / 24, cx + head_rx / 4, skin);

    // head
    fill_ellipse(img, fp, head_cy, head_cx, head_ry, head_rx, skin);

    // ears: 7 variants by size
    const int ear_r = 1 + c[5] / 2;
    fill_ellipse(img, fp, head_cy, head_cx - head_rx, ear_r + 1, ear_r, skin);
    fill_ellipse(img, fp, head_cy, head_cx + head_rx, ear_r + 1, ear_r, skin);

    // hair: 3 styles, 20 colors
    const uint8_t hair_col = static_cast<uint8_t>(20 + c[10] * 5);
    if (hair == 1) {
        fill_rect(img, fp, head_cy - head_ry - ph / 24, head_cx - head_rx, head_cy - head_ry + ph / 16,
                  head_cx + head_rx, hair_col);
    } else if (hair == 2) {
        for (int x = -head_rx; x <= head_rx; x += 3)
            fill_rect(img, fp, head_cy - head_ry - ph / 10, head_cx + x, head_cy - head_ry, head_cx + x + 1,
                      hair_col);
    }

    // eyes: eye_front 15 spacing variants, iris 10 sizes, iris_color 20
    const int eye_dx = head_rx * (40 + c[6] * 2) / 100;
    const int eye_y = head_cy - head_ry / 5;
    const int iris_r = 1 + c[7] / 5;
    const uint8_t iris_col = static_cast<uint8_t>(10 + c[9] * 4);
    fill_ellipse(img, fp, eye_y, head_cx - eye_dx, iris_r, iris_r, iris_col);
    fill_ellipse(img, fp, eye_y, head_cx + eye_dx, iris_r, iris_r, iris_col);

    // brows: 15 length variants, 20 colors
    const int brow_len = 2 + c[8] / 3;
    const uint8_t brow_col = static_cast<uint8_t>(15 + c[11] * 4);
    fill_rect(img, fp, eye_y - iris_r - 2, head_cx - eye_dx - brow_len / 2, eye_y - iris_r - 2,
              head_cx - eye_dx + brow_len / 2, brow_col);
    fill_rect(img, fp, eye_y - iris_r - 2, head_cx + eye_dx - brow_len / 2, eye_y - iris_r - 2,
              head_cx + eye_dx + brow_len / 2, brow_col);

    // nose: 15 variants by length
    const int nose_len = 1 + c[4] / 4;
    fill_rect(img, fp, head_cy, head_cx, head_cy + nose_len, head_cx, static_cast<uint8_t>(skin / 2));

    // lips: 15 widths, 20 tones
    const int lip_w = 2 + c[2] / 3;
    const uint8_t lip_col = static_cast<uint8_t>(60 + c[3] * 5);
    const int mouth_y = head_cy + head_ry / 2;
    fill_rect(img, fp, mouth_y, head_cx - lip_w, mouth_y, head_cx + lip_w, lip_col);

    // beard: 13 variants (0 = none), 20 colors
    if (c[13] > 0) {
        const uint8_t beard_col = static_cast<uint8_t>(25 + c[12] * 4);
        const int bh = 1 + c[13] / 4;
        fill_rect(img, fp, mouth_y + 2, head_cx - head_rx / 2, mouth_y + 2 + bh, head_cx + head_rx / 2,
                  beard_col);
    }

    // mustache: on/off
    if (mustache == 1)
        fill_rect(img, fp, mouth_y - 2, head_cx - lip_w - 1, mouth_y - 1, head_cx + lip_w + 1, 30);

    // glasses: 8 styles
    const uint8_t gl = 230;
    switch (glasses) {
    case 0: break; // none
    case 1:        // thin bar
        fill_rect(img, fp, eye_y, head_cx - eye_dx - 3, eye_y, head_cx + eye_dx + 3, gl);
        break;
    case 2: // thick bar
        fill_rect(img, fp, eye_y - 1, head_cx - eye_dx - 3, eye_y + 1, head_cx + eye_dx + 3, gl);
        break;
    case 3: // two rings
        for (int s = -1; s <= 1; s += 2)
            for (int a = 0; a < 16; ++a) {
                const double t = a * 3.14159265 / 8;
                put(img, fp, eye_y + static_cast<int>(std::lround((iris_r + 2) * std::sin(t))),
                    head_cx + s * eye_dx + static_cast<int>(std::lround((iris_r + 2) * std::cos(t))), gl);
            }
        break;
    case 4: // square frames
        for (int s = -1; s <= 1; s += 2) {
            const int ex = head_cx + s * eye_dx;
            fill_rect(img, fp, eye_y - iris_r - 1, ex - iris_r - 1, eye_y - iris_r - 1, ex + iris_r + 1, gl);
            fill_rect(img, fp, eye_y + iris_r + 1, ex - iris_r - 1, eye_y + iris_r + 1, ex + iris_r + 1, gl);
            fill_rect(img, fp, eye_y - iris_r - 1, ex - iris_r - 1, eye_y + iris_r + 1, ex - iris_r - 1, gl);
            fill_rect(img, fp, eye_y - iris_r - 1, ex + iris_r + 1, eye_y + iris_r + 1, ex + iris_r + 1, gl);
        }
        break;
    case 5: // rings plus thick bridge
        fill_rect(img, fp, eye_y - 1, head_cx - 2, eye_y + 1, head_cx + 2, gl);
        for (int s = -1; s <= 1; s += 2)
            fill_ellipse(img, fp, eye_y, head_cx + s * eye_dx, iris_r + 2, iris_r + 2, gl);
        break;
    case 6: // half frame below the eyes
        fill_rect(img, fp, eye_y + iris_r + 1, head_cx - eye_dx - 2, eye_y + iris_r + 1,
                  head_cx + eye_dx + 2, gl);
        break;
    default: // full dark band
        fill_rect(img, fp, eye_y - iris_r - 1, head_cx - eye_dx - 3, eye_y + iris_r + 1,
                  head_cx + eye_dx + 3, 250);
        break;
    }
}

namespace {

int total_slots() {
    int n = 0;
    for (int t = 0; t < person_card::kNumVariable; ++t) n += person_card::kVariable[t];
    return n;
}

} // namespace

PersonsData gen_persons(const PersonsConfig& cfg) {
    check(cfg.persons_min >= 2 && cfg.persons_max <= cfg.n_identities && cfg.persons_min <= cfg.persons_max,
          "persons: placement count must fit the identity set");
    PersonsData out;
    out.identities = make_identities(cfg.n_identities, cfg.seed);

    const int n_slots = total_slots(); // 20
    Dataset& d = out.data;
    d.name = cfg.occlusion ? "persons_occlusion" : "persons";
    d.img_h = cfg.img_h;
    d.img_w = cfg.img_w;
    d.occ_vocab = cfg.n_identities;
    if (cfg.combined_vocab) {
        d.task_vocab = cfg.n_identities * person_card::kNumVariable;
        d.arg_vocab = 1;
    } else {
        d.task_vocab = person_card::kNumVariable + (cfg.occlusion ? 1 : 0);
        d.arg_vocab = cfg.n_identities;
    }
    int off = 0;
    for (int t = 0; t < person_card::kNumVariable; ++t) {
        d.answer_groups.push_back({person_card::kVariableNames[t], off, person_card::kVariable[t]});
        off += person_card::kVariable[t];
    }
    if (cfg.occlusion) {
        d.answer_groups.push_back({"occl", off, 3});
        off += 3;
    }
    d.answer_vocab = off;
    d.aux_channels = cfg.occlusion ? 2 : 0;

    const int ph = cfg.img_h * 8 / 10;

    for (int i = 0; i < cfg.count; ++i) {
        Rng rng = Rng::fork(cfg.seed, static_cast<uint64_t>(i));
        const int k = cfg.persons_min + rng.uniform_int(cfg.persons_max - cfg.persons_min + 1);

        // identities without repetition
        std::vector<int> ids(static_cast<size_t>(cfg.n_identities));
        for (int j = 0; j < cfg.n_identities; ++j) ids[static_cast<size_t>(j)] = j;
        rng.shuffle(ids);
        ids.resize(static_cast<size_t>(k));

        const int forced =
            cfg.force_combos.empty() ? -1 : cfg.force_combos[static_cast<size_t>(i) % cfg.force_combos.size()];
        if (forced >= 0) {
            const int fid = forced / n_slots;
            if (std::find(ids.begin(), ids.end(), fid) == ids.end()) ids[0] = fid;
        }

        PersonsScene scene;
        std::vector<int> depth_order(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j) depth_order[static_cast<size_t>(j)] = j;
        rng.shuffle(depth_order);

        for (int j = 0; j < k; ++j) {
            PersonPlacement pl;
            pl.identity = ids[static_cast<size_t>(j)];
            for (int t = 0; t < person_card::kNumVariable; ++t) {
                for (int attempt = 0;; ++attempt) {
                    check(attempt < 256, "persons: cannot satisfy exclusion constraints");
                    const int v = rng.uniform_int(person_card::kVariable[t]);
                    const int key = person_combo_key(pl.identity, person_slot(t, v));
                    if (!cfg.avoid_combos.count(key)) {
                        pl.variable[static_cast<size_t>(t)] = v;
                        break;
                    }
                }
            }
            const int slot_w = cfg.img_w / k;
            pl.cx = slot_w * j + slot_w / 2 + rng.uniform_int(std::max(1, slot_w / 6)) - slot_w / 12;
            pl.cy = cfg.img_h / 2 + rng.uniform_int(std::max(1, cfg.img_h / 12));
            pl.depth = depth_order[static_cast<size_t>(j)];
            scene.placements.push_back(std::move(pl));
        }
        if (forced >= 0) {
            // plant the forced identity-property combination
            const int fid = forced / n_slots;
            const int slot = forced % n_slots;
            int t = 0, v = slot;
            while (v >= person_card::kVariable[t]) v -= person_card::kVariable[t++];
            for (auto& pl : scene.placements)
                if (pl.identity == fid) pl.variable[static_cast<size_t>(t)] = v;
        }

        if (cfg.occlusion && k >= 2) {
            // pull one adjacent pair together until their sprites overlap
            const int a = rng.uniform_int(k - 1);
            const int b = a + 1;
            auto& pa = scene.placements[static_cast<size_t>(a)];
            auto& pb = scene.placements[static_cast<size_t>(b)];
            const int target_gap = ph * 35 / 100;
            const int mid = (pa.cx + pb.cx) / 2;
            pa.cx = mid - target_gap / 2;
            pb.cx = mid + target_gap / 2;
            scene.occluding_pair[0] = pa.depth < pb.depth ? a : b;
            scene.occluding_pair[1] = pa.depth < pb.depth ? b : a;
        }

        // render back to front
        Image image(cfg.img_h, cfg.img_w);
        Rng bg = Rng::fork(hash_combine(cfg.seed, 0xb6u), static_cast<uint64_t>(i));
        for (auto& p : image.px) p = static_cast<uint8_t>(20 + bg.uniform_int(16));
        std::vector<int> order(static_cast<size_t>(k));
        for (int j = 0; j < k; ++j) order[static_cast<size_t>(j)] = j;
        std::sort(order.begin(), order.end(), [&](int x, int y) {
            return scene.placements[static_cast<size_t>(x)].depth > scene.placements[static_cast<size_t>(y)].depth;
        });
        for (int j : order) {
            auto& pl = scene.placements[static_cast<size_t>(j)];
            pl.footprint = Mask(cfg.img_h, cfg.img_w);
            render_person(image, pl.footprint, out.identities[static_cast<size_t>(pl.identity)], pl.variable,
                          pl.cx, pl.cy, ph);
        }
        // visible mask: nearer footprints win
        for (int j = 0; j < k; ++j) {
            auto& pl = scene.placements[static_cast<size_t>(j)];
            pl.visible = pl.footprint;
            for (int o = 0; o < k; ++o)
                if (scene.placements[static_cast<size_t>(o)].depth < pl.depth)
                    pl.visible.subtract(scene.placements[static_cast<size_t>(o)].footprint);
        }

        const int image_index = static_cast<int>(d.images.size());
        d.images.push_back(std::move(image));
        std::vector<int> realized;
        for (const auto& pl : scene.placements)
            for (int t = 0; t < person_card::kNumVariable; ++t)
                realized.push_back(person_combo_key(pl.identity, person_slot(t, pl.variable[static_cast<size_t>(t)])));
        d.image_pairs.push_back(realized);

        std::vector<int> occ;
        for (const auto& pl : scene.placements) occ.push_back(pl.identity);
        std::sort(occ.begin(), occ.end());

        Rng qrng = Rng::fork(hash_combine(cfg.seed, 0x9031u), static_cast<uint64_t>(i));
        if (!cfg.occlusion) {
            // distinct (person, property) queries first, then uniform re-draws
            std::vector<std::pair<int, int>> combos;
            for (int j = 0; j < k; ++j)
                for (int t = 0; t < person_card::kNumVariable; ++t) combos.emplace_back(j, t);
            qrng.shuffle(combos);
            for (int e = 0; e < cfg.examples_per_image; ++e) {
                std::pair<int, int> q;
                if (e < static_cast<int>(combos.size())) {
                    q = combos[static_cast<size_t>(e)];
                } else {
                    q = {qrng.uniform_int(k), qrng.uniform_int(person_card::kNumVariable)};
                }
                if (forced >= 0 && e == 0) {
                    const int fid = forced / n_slots;
                    int slot = forced % n_slots, t = 0;
                    while (slot >= person_card::kVariable[t]) slot -= person_card::kVariable[t++];
                    for (int j = 0; j < k; ++j)
                        if (scene.placements[static_cast<size_t>(j)].identity == fid) q = {j, t};
                }
                const auto& pl = scene.placements[static_cast<size_t>(q.first)];
                const int t = q.second;
                const int v = pl.variable[static_cast<size_t>(t)];
                Sample s;
                s.image_index = image_index;
                if (cfg.combined_vocab)
                    s.instr = Instruction::of(pl.identity * person_card::kNumVariable + t);
                else
                    s.instr = Instruction::of(t, pl.identity);
                s.answer_group = t;
                s.target = person_slot(t, v);
                s.target_mask = pl.visible;
                s.occurrence = occ;
                s.entity = pl.identity;
                s.pair_key = person_combo_key(pl.identity, person_slot(t, v));
                d.samples.push_back(std::move(s));
            }
        } else {
            const int occl_group = d.group_index("occl");
            const int base = d.answer_groups[static_cast<size_t>(occl_group)].offset;
            for (int e = 0; e < cfg.examples_per_image; ++e) {
                int a, b;
                if (e % 2 == 0 && scene.occluding_pair[0] >= 0) {
                    a = scene.occluding_pair[0];
                    b = scene.occluding_pair[1];
                    if (qrng.coin()) std::swap(a, b);
                } else {
                    a = qrng.uniform_int(k);
                    do {
                        b = qrng.uniform_int(k);
                    } while (b == a);
                }
                const auto& pa = scene.placements[static_cast<size_t>(a)];
                const auto& pb = scene.placements[static_cast<size_t>(b)];
                const bool overlap = !pa.footprint.intersect(pb.footprint).empty();
                int verdict = 2; // none
                if (overlap) verdict = pa.depth < pb.depth ? 0 : 1;

                Sample s;
                s.image_index = image_index;
                s.instr = Instruction{{person_card::kNumVariable}, {pa.identity}, {pb.identity}};
                s.answer_group = occl_group;
                s.target = base + verdict;
                Mask both = pa.visible;
                both.or_with(pb.visible);
                s.target_mask = std::move(both);
                s.aux_masks = {pa.visible, pb.visible};
                s.occurrence = occ;
                s.entity = pa.identity;
                d.samples.push_back(std::move(s));
            }
        }
        out.scenes.push_back(std::move(scene));
    }
    return out;
}

} // namespace butd
