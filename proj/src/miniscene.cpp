#include "butd/miniscene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "json.hpp"

namespace butd {

using nlohmann::json;
using namespace scene_inv;

std::vector<int> scene_inv::properties_of(int cls) {
    if (is_person(cls)) return {kClothes, kHair, kSunglasses, kHat};
    return {kSize, kColor};
}

std::vector<int> scene_inv::referring_relations_of(int cls) {
    if (is_person(cls)) return {kRightOf, kBehind, kFacing, kTouching, kClosest, kHolding};
    if (is_scene_object(cls)) return {kRightOf, kBehind, kTouching, kClosest, kOn};
    return {}; // held objects are reached through tool relations only
}

int expansion_task_vocab() { return kFlagRelBase + kRelationCount; }

const SceneItemRecord* MiniScene::find_edge_target(int subject, int relation) const {
    for (const auto& e : edges)
        if (e.subject == subject && e.relation == relation)
            return &items[static_cast<size_t>(e.object)];
    return nullptr;
}

std::vector<int> MiniScene::main_items_by_depth() const {
    std::vector<int> order;
    for (const auto& it : items)
        if (is_main(it.cls)) order.push_back(it.id);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        return items[static_cast<size_t>(a)].depth < items[static_cast<size_t>(b)].depth;
    });
    return order;
}

namespace {

void putpx(Image& img, Mask& fp, int y, int x, uint8_t v) {
    if (y < 0 || y >= img.h || x < 0 || x >= img.w) return;
    img.at(y, x) = v;
    fp.at(y, x) = 1;
}

void box(Image& img, Mask& fp, int y0, int x0, int y1, int x1, uint8_t v) {
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) putpx(img, fp, y, x, v);
}

void disc(Image& img, Mask& fp, int cy, int cx, int r, uint8_t v) {
    for (int y = -r; y <= r; ++y)
        for (int x = -r; x <= r; ++x)
            if (y * y + x * x <= r * r) putpx(img, fp, cy + y, cx + x, v);
}

void render_item(Image& img, SceneItemRecord& it, int img_h) {
    it.footprint = Mask(img.h, img.w);
    Mask& fp = it.footprint;
    const int cx = static_cast<int>(it.cx), cy = static_cast<int>(it.cy);
    if (is_person(it.cls)) {
        const bool adult = it.cls == kMan || it.cls == kWoman;
        const bool female = it.cls == kWoman || it.cls == kGirl;
        const int h = adult ? img_h * 62 / 100 : img_h * 44 / 100;
        const int head_r = h / 6;
        const int head_cy = cy - h / 2 + head_r;
        disc(img, fp, head_cy, cx, head_r, 200);
        // orientation: nose mark toward the facing side
        putpx(img, fp, head_cy, cx + it.orient * head_r, 40);
        putpx(img, fp, head_cy - 1, cx + it.orient * (head_r - 1), 40);
        if (it.props.at(kHat) == 1) box(img, fp, head_cy - head_r - 2, cx - head_r, head_cy - head_r, cx + head_r, 90);
        if (it.props.at(kSunglasses) == 1)
            box(img, fp, head_cy - 1, cx - head_r + 1, head_cy, cx + head_r - 1, 15);
        if (female || it.props.at(kHair) == 1) {
            box(img, fp, head_cy - head_r, cx - head_r - 2, head_cy + (female ? head_r : 0), cx - head_r, 60);
            box(img, fp, head_cy - head_r, cx + head_r, head_cy + (female ? head_r : 0), cx + head_r + 2, 60);
        }
        const int torso_top = head_cy + head_r;
        const int torso_bot = cy + h / 2;
        const int half = head_r + 2;
        const int clothes = it.props.at(kClothes);
        for (int y = torso_top; y <= torso_bot; ++y)
            for (int x = cx - half; x <= cx + half; ++x) {
                uint8_t v;
                switch (clothes) {
                case 0: v = 80; break;
                case 1: v = 160; break;
                case 2: v = (y / 2) % 2 ? 80 : 160; break;
                default: v = (x / 2) % 2 ? 80 : 160; break;
                }
                putpx(img, fp, y, x, v);
            }
        return;
    }
    const int size = it.props.at(kSize);        // 0..2
    const uint8_t col = static_cast<uint8_t>(70 + it.props.at(kColor) * 45);
    const int s = 3 + size * 2;
    switch (it.cls) {
    case kBench:
        box(img, fp, cy, cx - 3 * s, cy + 1, cx + 3 * s, col);
        box(img, fp, cy + 2, cx - 3 * s + 1, cy + 2 + s, cx - 3 * s + 2, col);
        box(img, fp, cy + 2, cx + 3 * s - 2, cy + 2 + s, cx + 3 * s - 1, col);
        break;
    case kChair:
        box(img, fp, cy, cx - s, cy + 1, cx + s, col);
        box(img, fp, cy - 2 * s, cx + s - 1, cy, cx + s, col);
        box(img, fp, cy + 2, cx - s, cy + 2 + s, cx - s + 1, col);
        break;
    case kTrashcan:
        box(img, fp, cy - s, cx - s, cy + s, cx + s, col);
        box(img, fp, cy - s - 1, cx - s - 1, cy - s, cx + s + 1, col);
        break;
    case kStreetlight:
        box(img, fp, cy - 3 * s, cx, cy + 2 * s, cx + 1, col);
        disc(img, fp, cy - 3 * s, cx + 1, 2, 250);
        break;
    case kTree:
        box(img, fp, cy, cx - 1, cy + 2 * s, cx + 1, 60);
        disc(img, fp, cy - s, cx, 2 * s, col);
        break;
    case kHammer:
        box(img, fp, cy - s, cx - 1, cy + s, cx, 110);
        box(img, fp, cy - s - 1, cx - s, cy - s, cx + s, col);
        break;
    case kHandbag:
        disc(img, fp, cy, cx, s, col);
        box(img, fp, cy - s - 1, cx - 1, cy - s, cx + 1, 30);
        break;
    case kSword:
        for (int k = -s - 2; k <= s + 2; ++k) putpx(img, fp, cy + k, cx + k / 2, 230);
        break;
    case kRacket:
        disc(img, fp, cy - s, cx, s, col);
        box(img, fp, cy, cx, cy + s + 2, cx + 1, 110);
        break;
    case kSign:
        box(img, fp, cy - s, cx - s, cy - 1, cx + s, col);
        box(img, fp, cy, cx, cy + 2 * s, cx + 1, 110);
        break;
    default:
        fail("render_item: unknown class");
    }
}

// geometric relation predicates; every edge in the scene comes from here
std::vector<SceneEdge> derive_edges(const std::vector<SceneItemRecord>& items, int img_h, int img_w) {
    std::vector<SceneEdge> edges;
    const float y_band = static_cast<float>(img_h) * 0.35f;
    const float facing_dist = static_cast<float>(img_w) * 0.45f;

    auto main_ids = [&] {
        std::vector<int> v;
        for (const auto& it : items)
            if (is_main(it.cls)) v.push_back(it.id);
        return v;
    }();

    for (int a : main_ids) {
        const auto& ia = items[static_cast<size_t>(a)];
        // right-of / left-of: nearest horizontal neighbor within the band
        int best_r = -1, best_l = -1;
        for (int b : main_ids) {
            if (b == a) continue;
            const auto& ib = items[static_cast<size_t>(b)];
            if (std::fabs(ib.cy - ia.cy) > y_band) continue;
            if (ib.cx > ia.cx + 4) {
                if (best_r < 0 || ib.cx < items[static_cast<size_t>(best_r)].cx) best_r = b;
            } else if (ib.cx < ia.cx - 4) {
                if (best_l < 0 || ib.cx > items[static_cast<size_t>(best_l)].cx) best_l = b;
            }
        }
        if (best_r >= 0) edges.push_back({a, kRightOf, best_r});
        if (best_l >= 0) edges.push_back({a, kLeftOf, best_l});

        // behind: next main item in depth order
        int next_depth = -1;
        for (int b : main_ids) {
            if (b == a) continue;
            const auto& ib = items[static_cast<size_t>(b)];
            if (ib.depth > ia.depth && (next_depth < 0 || ib.depth < items[static_cast<size_t>(next_depth)].depth))
                next_depth = b;
        }
        if (next_depth >= 0) edges.push_back({a, kBehind, next_depth});

        // closest main item by center distance
        int best_c = -1;
        float best_d = 0;
        for (int b : main_ids) {
            if (b == a) continue;
            const auto& ib = items[static_cast<size_t>(b)];
            const float d = std::hypot(ib.cx - ia.cx, ib.cy - ia.cy);
            if (best_c < 0 || d < best_d) {
                best_c = b;
                best_d = d;
            }
        }
        if (best_c >= 0) edges.push_back({a, kClosest, best_c});

        // facing: persons with opposed orientations, each pointing at the other
        if (is_person(ia.cls)) {
            int best_f = -1;
            float fdist = 0;
            for (int b : main_ids) {
                if (b == a) continue;
                const auto& ib = items[static_cast<size_t>(b)];
                if (!is_person(ib.cls)) continue;
                const float dx = ib.cx - ia.cx;
                if (std::fabs(dx) > facing_dist || std::fabs(ib.cy - ia.cy) > y_band) continue;
                if (ia.orient != (dx > 0 ? 1 : -1)) continue; // a must look toward b
                if (ib.orient != -ia.orient) continue;        // opposed flags
                if (best_f < 0 || std::fabs(dx) < fdist) {
                    best_f = b;
                    fdist = std::fabs(dx);
                }
            }
            if (best_f >= 0) edges.push_back({a, kFacing, best_f});
        }

        // touching: footprint adjacency
        for (int b : main_ids) {
            if (b == a) continue;
            if (masks_adjacent(ia.footprint, items[static_cast<size_t>(b)].footprint, 1))
                edges.push_back({a, kTouching, b});
        }
    }

    // occludes: overlapping footprints ordered by depth (any item kind)
    for (const auto& ia : items)
        for (const auto& ib : items) {
            if (ia.id == ib.id || ia.depth >= ib.depth) continue;
            if (!ia.footprint.intersect(ib.footprint).empty()) edges.push_back({ia.id, kOccludes, ib.id});
        }

    // holding / on from generation bookkeeping
    for (const auto& it : items) {
        if (it.holder >= 0) edges.push_back({it.holder, kHolding, it.id});
        if (it.base >= 0) edges.push_back({it.base, kOn, it.id});
    }
    std::sort(edges.begin(), edges.end());
    return edges;
}

bool edges_functional(const std::vector<SceneEdge>& edges) {
    for (size_t i = 1; i < edges.size(); ++i)
        if (edges[i].subject == edges[i - 1].subject && edges[i].relation == edges[i - 1].relation)
            return false;
    return true;
}

} // namespace

MiniSceneData gen_miniscene(const MiniSceneConfig& cfg) {
    MiniSceneData out;

    auto init_expansion = [&](Dataset& d) {
        d.name = "miniscene_expansion";
        d.img_h = cfg.img_h;
        d.img_w = cfg.img_w;
        d.task_vocab = expansion_task_vocab();
        d.arg_vocab = 1;
        d.occ_vocab = kClassCount;
        d.answer_vocab = kClassCount + 1; // + no-item token
        d.answer_groups = {{"class", 0, kClassCount + 1}};
        d.aux_channels = 1;
    };
    auto init_elaboration = [&](Dataset& d) {
        d.name = "miniscene_elaboration";
        d.img_h = cfg.img_h;
        d.img_w = cfg.img_w;
        d.task_vocab = kPropertyCount + 2; // + occludes(x,y), facing(x,y)
        d.arg_vocab = 1;
        d.occ_vocab = kClassCount;
        d.aux_channels = 2;
        int off = 0;
        for (int p = 0; p < kPropertyCount; ++p) {
            d.answer_groups.push_back({kPropertyNames[p], off, kPropertyCard[p]});
            off += kPropertyCard[p];
        }
        d.answer_groups.push_back({"occl", off, 3});
        off += 3;
        d.answer_groups.push_back({"bool", off, 2});
        off += 2;
        d.answer_vocab = off;
    };
    init_expansion(out.expansion);
    init_elaboration(out.elaboration);

    for (int i = 0; i < cfg.count; ++i) {
        MiniScene scene;
        scene.img_h = cfg.img_h;
        scene.img_w = cfg.img_w;
        Image image;
        for (int attempt = 0;; ++attempt) {
            check(attempt < 500, "miniscene: cannot build a functional scene");
            Rng rng = Rng::fork(hash_combine(cfg.seed, static_cast<uint64_t>(attempt)), static_cast<uint64_t>(i));
            scene.items.clear();
            scene.edges.clear();

            const int n_persons = cfg.persons_min + rng.uniform_int(cfg.persons_max - cfg.persons_min + 1);
            const int n_objects = cfg.objects_min + rng.uniform_int(cfg.objects_max - cfg.objects_min + 1);
            const int n_held = std::min(cfg.held_min + rng.uniform_int(cfg.held_max - cfg.held_min + 1), n_persons + n_objects);
            const int n_main = n_persons + n_objects;

            // spread main items across horizontal slots
            std::vector<int> slots(static_cast<size_t>(n_main));
            for (int s = 0; s < n_main; ++s) slots[static_cast<size_t>(s)] = s;
            rng.shuffle(slots);
            std::vector<int> depths(static_cast<size_t>(n_main + n_held));
            for (int s = 0; s < n_main + n_held; ++s) depths[static_cast<size_t>(s)] = s;
            rng.shuffle(depths);

            const int slot_w = cfg.img_w / std::max(1, n_main);
            for (int p = 0; p < n_main; ++p) {
                SceneItemRecord it;
                it.id = p;
                it.cls = p < n_persons ? rng.uniform_int(4) : kBench + rng.uniform_int(5);
                for (int prop : properties_of(it.cls)) it.props[prop] = rng.uniform_int(kPropertyCard[prop]);
                it.cx = static_cast<float>(slot_w * slots[static_cast<size_t>(p)] + slot_w / 2 +
                                           rng.uniform_int(std::max(1, slot_w / 5)) - slot_w / 10);
                it.cy = static_cast<float>(cfg.img_h) * (0.55f + 0.08f * rng.uniform());
                it.depth = depths[static_cast<size_t>(p)];
                it.orient = rng.coin() ? 1 : -1;
                scene.items.push_back(std::move(it));
            }

            // optionally pose a facing pair out of two adjacent persons
            if (n_persons >= 2 && rng.uniform() < cfg.facing_prob) {
                std::vector<int> persons;
                for (auto& it : scene.items)
                    if (is_person(it.cls)) persons.push_back(it.id);
                std::sort(persons.begin(), persons.end(), [&](int a, int b) {
                    return scene.items[static_cast<size_t>(a)].cx < scene.items[static_cast<size_t>(b)].cx;
                });
                const int k = rng.uniform_int(static_cast<int>(persons.size()) - 1);
                auto& pa = scene.items[static_cast<size_t>(persons[static_cast<size_t>(k)])];
                auto& pb = scene.items[static_cast<size_t>(persons[static_cast<size_t>(k) + 1])];
                pa.orient = 1;
                pb.orient = -1;
            }

            // held objects: attach to a person (holding) or a scene object (on)
            for (int hgt = 0; hgt < n_held; ++hgt) {
                SceneItemRecord it;
                it.id = n_main + hgt;
                it.cls = kHammer + rng.uniform_int(5);
                for (int prop : properties_of(it.cls)) it.props[prop] = rng.uniform_int(kPropertyCard[prop]);
                it.depth = depths[static_cast<size_t>(n_main + hgt)];
                // hosts must not already hold/support something
                std::vector<int> hosts;
                for (const auto& host : scene.items) {
                    if (host.id >= n_main) continue;
                    bool taken = false;
                    for (const auto& other : scene.items)
                        if (other.holder == host.id || other.base == host.id) taken = true;
                    if (!taken) hosts.push_back(host.id);
                }
                if (hosts.empty()) break;
                const int host_id = hosts[static_cast<size_t>(rng.uniform_int(static_cast<int>(hosts.size())))];
                const auto& host = scene.items[static_cast<size_t>(host_id)];
                if (is_person(host.cls)) {
                    it.holder = host_id;
                    it.cx = host.cx + static_cast<float>(host.orient) * static_cast<float>(cfg.img_h) * 0.14f;
                    it.cy = host.cy + static_cast<float>(cfg.img_h) * 0.05f;
                } else {
                    it.base = host_id;
                    it.cx = host.cx;
                    it.cy = host.cy - static_cast<float>(cfg.img_h) * 0.12f;
                }
                scene.items.push_back(std::move(it));
            }

            // render back to front
            image = Image(cfg.img_h, cfg.img_w);
            Rng bg = Rng::fork(hash_combine(cfg.seed, 0xb07u), static_cast<uint64_t>(i));
            for (auto& p : image.px) p = static_cast<uint8_t>(12 + bg.uniform_int(10));
            std::vector<int> order;
            for (const auto& it : scene.items) order.push_back(it.id);
            std::sort(order.begin(), order.end(), [&](int a, int b) {
                return scene.items[static_cast<size_t>(a)].depth > scene.items[static_cast<size_t>(b)].depth;
            });
            for (int id : order) render_item(image, scene.items[static_cast<size_t>(id)], cfg.img_h);
            for (auto& it : scene.items) {
                it.visible = it.footprint;
                for (const auto& other : scene.items)
                    if (other.depth < it.depth) it.visible.subtract(other.footprint);
            }
            bool all_visible = true;
            for (const auto& it : scene.items)
                if (it.visible.count() < 4) all_visible = false;
            if (!all_visible) continue;

            scene.edges = derive_edges(scene.items, cfg.img_h, cfg.img_w);
            // keep occlusion rate in line with the config
            int occl = 0;
            for (const auto& e : scene.edges) occl += e.relation == kOccludes ? 1 : 0;
            if (occl > 0 && Rng::fork(cfg.seed, static_cast<uint64_t>(i)).uniform() >= cfg.occlude_prob) continue;
            if (edges_functional(scene.edges)) break;
        }

        const int image_index = static_cast<int>(out.images.size());
        out.images.push_back(image);

        if (cfg.emit_samples) {
            std::vector<int> occ;
            for (const auto& it : scene.items) occ.push_back(it.cls);
            std::sort(occ.begin(), occ.end());
            occ.erase(std::unique(occ.begin(), occ.end()), occ.end());

            // extract-next curriculum over main items
            Mask cumulative(cfg.img_h, cfg.img_w);
            out.expansion.images.push_back(image);
            out.elaboration.images.push_back(image);
            const int eimg = static_cast<int>(out.expansion.images.size()) - 1;
            auto add_expansion = [&](int task, const Mask& ref, int target_cls, const Mask* tmask) {
                Sample s;
                s.image_index = eimg;
                s.instr = Instruction::of(task);
                s.target = target_cls;
                if (tmask) s.target_mask = *tmask;
                s.aux_masks = {ref};
                s.occurrence = occ;
                out.expansion.samples.push_back(std::move(s));
            };
            for (int id : scene.main_items_by_depth()) {
                const auto& it = scene.items[static_cast<size_t>(id)];
                add_expansion(kFlagNextItem, cumulative, it.cls, &it.visible);
                cumulative.or_with(it.visible);
            }
            add_expansion(kFlagNextItem, cumulative, kClassCount, nullptr);
            for (const auto& e : scene.edges) {
                const auto& subj = scene.items[static_cast<size_t>(e.subject)];
                const auto& obj = scene.items[static_cast<size_t>(e.object)];
                auto rels = referring_relations_of(subj.cls);
                if (std::find(rels.begin(), rels.end(), e.relation) == rels.end()) continue;
                add_expansion(kFlagRelBase + e.relation, subj.visible, obj.cls, &obj.visible);
            }

            // elaboration: property queries and two-argument relations
            const Mask zeros(cfg.img_h, cfg.img_w);
            auto add_elab = [&](int task, const Mask& m1, const Mask& m2, int group_name_idx, int value) {
                Sample s;
                s.image_index = eimg;
                s.instr = Instruction::of(task);
                s.answer_group = group_name_idx;
                s.target = out.elaboration.answer_groups[static_cast<size_t>(group_name_idx)].offset + value;
                s.aux_masks = {m1, m2};
                s.occurrence = occ;
                out.elaboration.samples.push_back(std::move(s));
            };
            for (const auto& it : scene.items)
                for (int prop : properties_of(it.cls))
                    add_elab(prop, it.visible, zeros, prop, it.props.at(prop));
            const int occl_group = out.elaboration.group_index("occl");
            const int bool_group = out.elaboration.group_index("bool");
            for (const auto& ia : scene.items)
                for (const auto& ib : scene.items) {
                    if (ia.id >= ib.id || !is_main(ia.cls) || !is_main(ib.cls)) continue;
                    const bool overlap = !ia.footprint.intersect(ib.footprint).empty();
                    const int verdict = overlap ? (ia.depth < ib.depth ? 0 : 1) : 2;
                    add_elab(kPropertyCount, ia.visible, ib.visible, occl_group, verdict);
                    if (is_person(ia.cls) && is_person(ib.cls)) {
                        bool facing = false;
                        for (const auto& e : scene.edges)
                            if (e.relation == kFacing && e.subject == ia.id && e.object == ib.id) facing = true;
                        add_elab(kPropertyCount + 1, ia.visible, ib.visible, bool_group, facing ? 1 : 0);
                    }
                }
        }
        out.scenes.push_back(std::move(scene));
    }
    return out;
}

// ---------------- scenes.jsonl ----------------

void write_scenes(const std::vector<MiniScene>& scenes, const std::string& path) {
    std::ofstream os(path);
    check(static_cast<bool>(os), "scenes: cannot write " + path);
    for (const auto& sc : scenes) {
        json r;
        r["img_h"] = sc.img_h;
        r["img_w"] = sc.img_w;
        json items = json::array();
        for (const auto& it : sc.items) {
            json ji;
            ji["id"] = it.id;
            ji["class"] = kClassNames[it.cls];
            json props;
            for (auto [p, v] : it.props) props[kPropertyNames[p]] = v;
            ji["props"] = props;
            ji["cx"] = it.cx;
            ji["cy"] = it.cy;
            ji["depth"] = it.depth;
            ji["orient"] = it.orient;
            ji["mask"] = rle_encode(it.visible);
            ji["footprint"] = rle_encode(it.footprint);
            if (it.holder >= 0) ji["holder"] = it.holder;
            if (it.base >= 0) ji["base"] = it.base;
            items.push_back(std::move(ji));
        }
        r["items"] = std::move(items);
        json edges = json::array();
        for (const auto& e : sc.edges)
            edges.push_back({{"from", e.subject}, {"relation", kRelationNames[e.relation]}, {"to", e.object}});
        r["edges"] = std::move(edges);
        os << r.dump() << "\n";
    }
}

std::vector<MiniScene> read_scenes(const std::string& path) {
    std::ifstream is(path);
    check(static_cast<bool>(is), "scenes: cannot open " + path);
    auto class_id = [](const std::string& n) {
        for (int c = 0; c < kClassCount; ++c)
            if (n == kClassNames[c]) return c;
        fail("scenes: unknown class " + n);
    };
    auto prop_id = [](const std::string& n) {
        for (int p = 0; p < kPropertyCount; ++p)
            if (n == kPropertyNames[p]) return p;
        fail("scenes: unknown property " + n);
    };
    auto rel_id = [](const std::string& n) {
        for (int r = 0; r < kRelationCount; ++r)
            if (n == kRelationNames[r]) return r;
        fail("scenes: unknown relation " + n);
    };
    std::vector<MiniScene> out;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        json r = json::parse(line);
        MiniScene sc;
        sc.img_h = r.at("img_h").get<int>();
        sc.img_w = r.at("img_w").get<int>();
        for (const auto& ji : r.at("items")) {
            SceneItemRecord it;
            it.id = ji.at("id").get<int>();
            it.cls = class_id(ji.at("class").get<std::string>());
            for (auto& [k, v] : ji.at("props").items()) it.props[prop_id(k)] = v.get<int>();
            it.cx = ji.at("cx").get<float>();
            it.cy = ji.at("cy").get<float>();
            it.depth = ji.at("depth").get<int>();
            it.orient = ji.at("orient").get<int>();
            it.visible = rle_decode(ji.at("mask").get<std::vector<int>>(), sc.img_h, sc.img_w);
            it.footprint = rle_decode(ji.at("footprint").get<std::vector<int>>(), sc.img_h, sc.img_w);
            if (ji.contains("holder")) it.holder = ji.at("holder").get<int>();
            if (ji.contains("base")) it.base = ji.at("base").get<int>();
            sc.items.push_back(std::move(it));
        }
        for (const auto& je : r.at("edges"))
            sc.edges.push_back({je.at("from").get<int>(), rel_id(je.at("relation").get<std::string>()),
                                je.at("to").get<int>()});
        out.push_back(std::move(sc));
    }
    return out;
}

} // namespace butd
