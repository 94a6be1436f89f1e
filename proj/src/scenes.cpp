#include "phier/scenes.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <stdexcept>

#include <json.hpp>

#include "phier/rng.hpp"

namespace phier::scenes {

using json = nlohmann::ordered_json;

namespace {

const std::vector<std::string> kCategoryNames = {
    "cup",     "plate",     "block_red", "block_blue",
    "cabinet", "microwave", "lamp",      "box"};

[[noreturn]] void fail(const std::string& msg) { throw std::runtime_error(msg); }

}  // namespace

const std::string& category_name(Category c) {
  return kCategoryNames[static_cast<int>(c)];
}

Category category_from_name(const std::string& name) {
  for (int i = 0; i < kCategoryCount; ++i)
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  fail("unknown object category '" + name + "'");
}

bool is_container(Category c) {
  return c == Category::cabinet || c == Category::microwave || c == Category::box;
}

bool has_power(Category c) { return c == Category::lamp; }

std::pair<int, int> category_size(Category c) {
  switch (c) {
    case Category::cup: return {1, 1};
    case Category::plate: return {2, 1};
    case Category::block_red: return {1, 1};
    case Category::block_blue: return {1, 1};
    case Category::cabinet: return {4, 4};
    case Category::microwave: return {3, 3};
    case Category::lamp: return {1, 1};
    case Category::box: return {3, 3};
  }
  fail("category_size: bad category");
}

bool is_unary_predicate(const std::string& p) {
  return p == "Open" || p == "Closed" || p == "TurnedOn" || p == "TurnedOff";
}

namespace {

bool known_predicate(const std::string& p) {
  static const std::set<std::string> k = {
      "Touching", "NextTo", "OnLeft",   "OnRight",  "OnTop",    "Under",
      "Inside",   "Contains", "Open",   "Closed",   "TurnedOn", "TurnedOff"};
  return k.count(p) > 0;
}

// Positive separation = gap between projections; negative = overlap depth.
int sep_x(const SceneObject& a, const SceneObject& b) {
  return std::max(b.x - (a.x + a.w), a.x - (b.x + b.w));
}
int sep_y(const SceneObject& a, const SceneObject& b) {
  return std::max(b.y - (a.y + a.h), a.y - (b.y + b.h));
}
int overlap_y(const SceneObject& a, const SceneObject& b) {
  return std::min(a.y + a.h, b.y + b.h) - std::max(a.y, b.y);
}
int overlap_x(const SceneObject& a, const SceneObject& b) {
  return std::min(a.x + a.w, b.x + b.w) - std::max(a.x, b.x);
}

bool rects_overlap(const SceneObject& a, const SceneObject& b) {
  return sep_x(a, b) < 0 && sep_y(a, b) < 0;
}

bool touching(const SceneObject& a, const SceneObject& b) {
  return std::max(sep_x(a, b), sep_y(a, b)) <= 0;
}

bool next_to(const SceneObject& a, const SceneObject& b) {
  int sx = sep_x(a, b);
  return sx >= 0 && sx <= 1 && overlap_y(a, b) >= 1;
}

// center comparison without fractions: 2x + w
bool on_left(const SceneObject& a, const SceneObject& b) {
  return next_to(a, b) && 2 * a.x + a.w < 2 * b.x + b.w;
}

bool on_top(const SceneObject& a, const SceneObject& b) {
  return a.y + a.h == b.y && overlap_x(a, b) >= 1;
}

const SceneObject& find_object(const Scene& scene, const std::string& cat_name) {
  Category c = category_from_name(cat_name);
  const SceneObject* found = nullptr;
  for (const auto& o : scene.objects) {
    if (o.cat != c) continue;
    if (found) fail("eval_predicate: ambiguous object '" + cat_name + "'");
    found = &o;
  }
  if (!found) fail("eval_predicate: missing object '" + cat_name + "'");
  return *found;
}

bool unary_state(const SceneObject& o, const std::string& predicate) {
  if (predicate == "Open" || predicate == "Closed") {
    if (!o.open_state)
      fail("eval_predicate: '" + predicate + "' needs an openable object, got " +
           category_name(o.cat));
    return predicate == "Open" ? *o.open_state : !*o.open_state;
  }
  if (!o.power_state)
    fail("eval_predicate: '" + predicate + "' needs a powered object, got " +
         category_name(o.cat));
  return predicate == "TurnedOn" ? *o.power_state : !*o.power_state;
}

}  // namespace

bool eval_predicate(const Scene& scene, const Query& query) {
  if (!known_predicate(query.predicate))
    fail("eval_predicate: unknown predicate '" + query.predicate + "'");
  bool unary = is_unary_predicate(query.predicate);
  if (unary && query.obj2) fail("eval_predicate: unary predicate with two objects");
  if (!unary && !query.obj2) fail("eval_predicate: binary predicate needs obj2");

  const SceneObject& o1 = find_object(scene, query.obj1);
  if (unary) return unary_state(o1, query.predicate);

  const SceneObject& o2 = find_object(scene, *query.obj2);
  const std::string& p = query.predicate;
  if (p == "Touching") return touching(o1, o2);
  if (p == "NextTo") return next_to(o1, o2);
  if (p == "OnLeft") return on_left(o1, o2);
  if (p == "OnRight") return on_left(o2, o1);
  if (p == "OnTop") return on_top(o1, o2);
  if (p == "Under") return on_top(o2, o1);
  if (p == "Inside") return o1.contained_in && *o1.contained_in == o2.id;
  if (p == "Contains") return o2.contained_in && *o2.contained_in == o1.id;
  fail("eval_predicate: unhandled predicate '" + p + "'");
}

numcore::Tensor render(const Scene& scene) {
  numcore::Tensor img = numcore::Tensor::zeros(
      {kRenderSize, kRenderSize, kChannels});
  auto paint = [&](const SceneObject& o, int channel) {
    for (int gy = o.y; gy < o.y + o.h; ++gy)
      for (int gx = o.x; gx < o.x + o.w; ++gx)
        for (int py = gy * kRenderScale; py < (gy + 1) * kRenderScale; ++py)
          for (int px = gx * kRenderScale; px < (gx + 1) * kRenderScale; ++px)
            img.data[(py * kRenderSize + px) * kChannels + channel] = 1.0;
  };
  for (const auto& o : scene.objects) {
    paint(o, static_cast<int>(o.cat));
    if (o.open_state && *o.open_state) paint(o, 8);
    if (o.power_state && *o.power_state) paint(o, 9);
  }
  return img;
}

std::string query_text(const Query& q) {
  if (q.obj2) return "Is the " + q.obj1 + " " + q.predicate + " the " + *q.obj2;
  return "Is the " + q.obj1 + " " + q.predicate;
}

// ---------------------------------------------------------------------------
// default split
// ---------------------------------------------------------------------------

SplitConfig split_states() {
  auto bin = [](std::string p, std::string a, std::string b, std::string tag) {
    return StateTemplate{Query{std::move(p), std::move(a), std::move(b)},
                         std::move(tag)};
  };
  auto una = [](std::string p, std::string a, std::string tag) {
    return StateTemplate{Query{std::move(p), std::move(a), std::nullopt},
                         std::move(tag)};
  };

  SplitConfig cfg;
  cfg.train_states = {
      bin("NextTo", "cup", "plate", "id"),
      bin("OnLeft", "block_red", "block_blue", "id"),
      bin("OnTop", "cup", "box", "id"),
      bin("Inside", "plate", "cabinet", "id"),
      bin("Touching", "block_blue", "cup", "id"),
      una("Open", "cabinet", "id"),
      una("TurnedOn", "lamp", "id"),
      bin("Under", "plate", "block_red", "id"),
  };
  cfg.test_id_states = cfg.train_states;

  cfg.test_ood_states = {
      bin("NextTo", "block_red", "lamp", "ood_unseen_combo"),
      bin("OnLeft", "cup", "microwave", "ood_unseen_combo"),
      bin("OnTop", "block_blue", "plate", "ood_unseen_combo"),
      bin("Inside", "cup", "box", "ood_unseen_combo"),
      bin("Touching", "plate", "microwave", "ood_unseen_combo"),
      una("Open", "microwave", "ood_unseen_combo"),
      bin("Under", "box", "cup", "ood_unseen_combo"),
      una("Open", "box", "ood_unseen_combo"),
      bin("OnRight", "block_blue", "block_red", "ood_novel_pred"),
      una("Closed", "cabinet", "ood_novel_pred"),
      una("TurnedOff", "lamp", "ood_novel_pred"),
      bin("Contains", "cabinet", "plate", "ood_novel_pred"),
  };
  for (const auto& s : cfg.test_ood_states)
    if (s.split_tag == "ood_novel_pred") cfg.shot_states.push_back(s);

  std::set<std::string> id_preds, novel_preds;
  for (const auto& s : cfg.train_states) id_preds.insert(s.query.predicate);
  for (const auto& s : cfg.test_ood_states)
    if (s.split_tag == "ood_novel_pred") novel_preds.insert(s.query.predicate);
  for (const auto& p : novel_preds)
    if (id_preds.count(p))
      fail("split_states: predicate '" + p + "' is both ID and novel");
  return cfg;
}

// ---------------------------------------------------------------------------
// generation
// ---------------------------------------------------------------------------

namespace {

struct Placer {
  std::mt19937_64& rng;
  std::vector<SceneObject>& objects;

  int rand_int(int lo, int hi) {  // inclusive
    std::uniform_int_distribution<int> d(lo, hi);
    return d(rng);
  }

  bool position_ok(const SceneObject& cand) const {
    if (cand.x < 0 || cand.y < 0 || cand.x + cand.w > kGridSize ||
        cand.y + cand.h > kGridSize)
      return false;
    for (const auto& o : objects) {
      bool related = (cand.contained_in && *cand.contained_in == o.id) ||
                     (o.contained_in && *o.contained_in == cand.id);
      if (related) continue;
      if (rects_overlap(cand, o)) return false;
    }
    return true;
  }

  bool strictly_inside(const SceneObject& inner, const SceneObject& outer) const {
    return inner.x > outer.x && inner.y > outer.y &&
           inner.x + inner.w < outer.x + outer.w &&
           inner.y + inner.h < outer.y + outer.h;
  }

  SceneObject make(Category c) {
    SceneObject o;
    o.id = static_cast<int>(objects.size());
    o.cat = c;
    auto [w, h] = category_size(c);
    o.w = w;
    o.h = h;
    if (is_container(c)) o.open_state = rand_int(0, 1) == 1;
    if (has_power(c)) o.power_state = rand_int(0, 1) == 1;
    return o;
  }

  bool place_random(SceneObject& o, int tries = 40) {
    for (int t = 0; t < tries; ++t) {
      o.x = rand_int(0, kGridSize - o.w);
      o.y = rand_int(0, kGridSize - o.h);
      if (position_ok(o)) return true;
    }
    return false;
  }

  bool place_at(SceneObject& o, int x, int y) {
    o.x = x;
    o.y = y;
    return position_ok(o);
  }
};

// Constructive positive placement of o1 relative to an already placed o2.
// Returns false when no valid spot was found; the caller then discards the
// attempt.
bool place_positive(Placer& pl, const std::string& pred, SceneObject& o1,
                    const SceneObject& o2, int tries = 40) {
  for (int t = 0; t < tries; ++t) {
    if (pred == "Inside") {
      if (o2.x + o2.w - o1.w - 1 < o2.x + 1 || o2.y + o2.h - o1.h - 1 < o2.y + 1)
        return false;  // container too small
      int x = pl.rand_int(o2.x + 1, o2.x + o2.w - o1.w - 1);
      int y = pl.rand_int(o2.y + 1, o2.y + o2.h - o1.h - 1);
      o1.contained_in = o2.id;
      if (pl.place_at(o1, x, y) && pl.strictly_inside(o1, o2)) return true;
      o1.contained_in.reset();
      continue;
    }
    if (pred == "OnTop") {
      int y = o2.y - o1.h;
      int x = pl.rand_int(o2.x - o1.w + 1, o2.x + o2.w - 1);
      if (y >= 0 && pl.place_at(o1, x, y)) return true;
      continue;
    }
    if (pred == "NextTo" || pred == "OnLeft" || pred == "OnRight" ||
        pred == "Touching") {
      bool left;
      if (pred == "OnLeft") left = true;
      else if (pred == "OnRight") left = false;
      else left = pl.rand_int(0, 1) == 1;
      int gap = pred == "Touching" ? 0 : pl.rand_int(0, 1);
      int x = left ? o2.x - o1.w - gap : o2.x + o2.w + gap;
      int ylo = o2.y - o1.h + 1, yhi = o2.y + o2.h - 1;
      int y = pl.rand_int(std::max(0, ylo), std::min(kGridSize - o1.h, yhi));
      if (pl.place_at(o1, x, y)) return true;
      continue;
    }
    return false;
  }
  return false;
}

// One scene proposal for a state template; nullopt when placement failed.
std::optional<Scene> sample_scene(std::uint64_t scene_seed, const Query& query,
                                  bool hint_positive) {
  std::mt19937_64 rng(scene_seed);
  Scene scene;
  scene.seed = scene_seed;
  Placer pl{rng, scene.objects};

  std::set<std::string> used = {query.obj1};
  if (query.obj2) used.insert(*query.obj2);

  bool unary = is_unary_predicate(query.predicate);
  if (unary) {
    SceneObject o1 = pl.make(category_from_name(query.obj1));
    if (hint_positive) {
      bool want = query.predicate == "Open" || query.predicate == "TurnedOn";
      if (o1.open_state) o1.open_state = want;
      if (o1.power_state) o1.power_state = want;
    }
    if (!pl.place_random(o1)) return std::nullopt;
    scene.objects.push_back(o1);
  } else {
    // Contains(o1,o2) is constructed as Inside(o2,o1); Under as flipped
    // OnTop. `mover` is placed relative to an already placed `base`.
    std::string pred;
    std::string base_cat, mover_cat;
    if (query.predicate == "Contains") {
      base_cat = query.obj1;   // the container
      mover_cat = *query.obj2; // the contained object
      pred = "Inside";
    } else if (query.predicate == "Under") {
      base_cat = query.obj1;   // the lower object
      mover_cat = *query.obj2; // goes on top
      pred = "OnTop";
    } else {
      base_cat = *query.obj2;
      mover_cat = query.obj1;
      pred = query.predicate;
    }
    SceneObject base_obj = pl.make(category_from_name(base_cat));
    if (!pl.place_random(base_obj)) return std::nullopt;
    scene.objects.push_back(base_obj);

    SceneObject mover_obj = pl.make(category_from_name(mover_cat));
    if (hint_positive) {
      if (!place_positive(pl, pred, mover_obj, scene.objects[0]))
        return std::nullopt;
    } else {
      if (!pl.place_random(mover_obj)) return std::nullopt;
    }
    scene.objects.push_back(mover_obj);
  }

  // distractors: up to 2 unused categories, placed free-standing
  int extra = pl.rand_int(0, 2);
  std::vector<Category> pool;
  for (int i = 0; i < kCategoryCount; ++i) {
    Category c = static_cast<Category>(i);
    if (!used.count(category_name(c))) pool.push_back(c);
  }
  std::shuffle(pool.begin(), pool.end(), rng);
  for (int i = 0; i < extra && i < static_cast<int>(pool.size()); ++i) {
    SceneObject d = pl.make(pool[i]);
    if (!pl.place_random(d, 15)) continue;  // crowded grid: skip distractor
    scene.objects.push_back(d);
  }
  return scene;
}

std::string state_key(const Query& q) {
  return q.obj2 ? q.predicate + "(" + q.obj1 + "," + *q.obj2 + ")"
                : q.predicate + "(" + q.obj1 + ")";
}

void generate_state(const DatasetManifest& m, const StateTemplate& st,
                    std::size_t stream_id, int need_pos, int need_neg,
                    std::vector<Example>& out) {
  int pos = 0, neg = 0;
  for (std::uint64_t attempt = 0; pos < need_pos || neg < need_neg; ++attempt) {
    if (attempt >= m.max_attempts)
      fail("generate_dataset: quota unreachable for state " +
           state_key(st.query) + " (" + std::to_string(pos) + "/" +
           std::to_string(need_pos) + " positive, " + std::to_string(neg) +
           "/" + std::to_string(need_neg) + " negative after " +
           std::to_string(attempt) + " attempts)");
    std::uint64_t scene_seed = rng::derive(m.seed, stream_id, attempt);
    bool hint = (rng::derive(m.seed, stream_id, attempt ^ 0x5eedULL) & 1) == 1;
    auto scene = sample_scene(scene_seed, st.query, hint);
    if (!scene) continue;
    bool label = eval_predicate(*scene, st.query);
    if (label && pos < need_pos) {
      out.push_back(Example{std::move(*scene), st.query, label, st.split_tag});
      ++pos;
    } else if (!label && neg < need_neg) {
      out.push_back(Example{std::move(*scene), st.query, label, st.split_tag});
      ++neg;
    }
  }
}

}  // namespace

Dataset generate_dataset(const DatasetManifest& manifest) {
  Dataset ds;
  ds.manifest = manifest;
  const SplitConfig& sp = manifest.splits;
  std::size_t stream = 0;
  for (const auto& st : sp.train_states)
    generate_state(manifest, st, 1000 + stream++, manifest.train_pos,
                   manifest.train_neg, ds.train);
  stream = 0;
  for (const auto& st : sp.test_id_states)
    generate_state(manifest, st, 2000 + stream++, manifest.test_pos,
                   manifest.test_neg, ds.test_id);
  stream = 0;
  for (const auto& st : sp.test_ood_states)
    generate_state(manifest, st, 3000 + stream++, manifest.test_pos,
                   manifest.test_neg, ds.test_ood);
  stream = 0;
  for (const auto& st : sp.shot_states) {
    int pos = (manifest.shots_per_state + 1) / 2;  // 5 -> 3 True / 2 False
    generate_state(manifest, st, 4000 + stream++, pos,
                   manifest.shots_per_state - pos, ds.shots);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// serialization
// ---------------------------------------------------------------------------

namespace {

json query_to_json(const Query& q) {
  json j;
  j["predicate"] = q.predicate;
  j["obj1"] = q.obj1;
  if (q.obj2) j["obj2"] = *q.obj2;
  return j;
}

Query query_from_json(const json& j) {
  Query q;
  q.predicate = j.at("predicate").get<std::string>();
  q.obj1 = j.at("obj1").get<std::string>();
  if (j.contains("obj2")) q.obj2 = j.at("obj2").get<std::string>();
  return q;
}

json state_to_json(const StateTemplate& st) {
  json j = query_to_json(st.query);
  j["split_tag"] = st.split_tag;
  return j;
}

StateTemplate state_from_json(const json& j) {
  return StateTemplate{query_from_json(j), j.at("split_tag").get<std::string>()};
}

}  // namespace

std::string example_to_json(const Example& e) {
  json j;
  j["scene"]["seed"] = e.scene.seed;
  json objs = json::array();
  for (const auto& o : e.scene.objects) {
    json jo;
    jo["id"] = o.id;
    jo["category"] = category_name(o.cat);
    jo["rect"] = {o.x, o.y, o.w, o.h};
    if (o.open_state) jo["open_state"] = *o.open_state;
    if (o.power_state) jo["power_state"] = *o.power_state;
    if (o.contained_in) jo["contained_in"] = *o.contained_in;
    objs.push_back(std::move(jo));
  }
  j["scene"]["objects"] = std::move(objs);
  j["query"] = query_to_json(e.query);
  j["label"] = e.label;
  j["split_tag"] = e.split_tag;
  return j.dump();
}

Example example_from_json(const std::string& line) {
  json j = json::parse(line);
  Example e;
  e.scene.seed = j.at("scene").at("seed").get<std::uint64_t>();
  for (const auto& jo : j.at("scene").at("objects")) {
    SceneObject o;
    o.id = jo.at("id").get<int>();
    o.cat = category_from_name(jo.at("category").get<std::string>());
    auto r = jo.at("rect");
    o.x = r.at(0).get<int>();
    o.y = r.at(1).get<int>();
    o.w = r.at(2).get<int>();
    o.h = r.at(3).get<int>();
    if (jo.contains("open_state")) o.open_state = jo.at("open_state").get<bool>();
    if (jo.contains("power_state"))
      o.power_state = jo.at("power_state").get<bool>();
    if (jo.contains("contained_in"))
      o.contained_in = jo.at("contained_in").get<int>();
    e.scene.objects.push_back(std::move(o));
  }
  e.query = query_from_json(j.at("query"));
  e.label = j.at("label").get<bool>();
  e.split_tag = j.at("split_tag").get<std::string>();
  if (e.label != eval_predicate(e.scene, e.query))
    fail("example_from_json: stored label disagrees with eval_predicate");
  return e;
}

namespace {

void write_split(const std::string& path, const std::vector<Example>& ex) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail("save_dataset: cannot write " + path);
  for (const auto& e : ex) out << example_to_json(e) << "\n";
}

std::vector<Example> read_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("load_dataset: cannot read " + path);
  std::vector<Example> out;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) out.push_back(example_from_json(line));
  }
  return out;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  std::filesystem::create_directories(dir);
  json m;
  m["seed"] = ds.manifest.seed;
  m["train_pos"] = ds.manifest.train_pos;
  m["train_neg"] = ds.manifest.train_neg;
  m["test_pos"] = ds.manifest.test_pos;
  m["test_neg"] = ds.manifest.test_neg;
  m["shots_per_state"] = ds.manifest.shots_per_state;
  m["max_attempts"] = ds.manifest.max_attempts;
  m["grid_size"] = kGridSize;
  m["render_size"] = kRenderSize;
  m["channels"] = kChannels;
  auto states = [&](const std::vector<StateTemplate>& v) {
    json arr = json::array();
    for (const auto& s : v) arr.push_back(state_to_json(s));
    return arr;
  };
  m["train_states"] = states(ds.manifest.splits.train_states);
  m["test_id_states"] = states(ds.manifest.splits.test_id_states);
  m["test_ood_states"] = states(ds.manifest.splits.test_ood_states);
  m["shot_states"] = states(ds.manifest.splits.shot_states);

  json counts;
  auto count_split = [&](const std::vector<Example>& ex) {
    json c;
    for (const auto& e : ex) {
      std::string key = state_key(e.query);
      if (!c.contains(key)) c[key] = {{"pos", 0}, {"neg", 0}};
      c[key][e.label ? "pos" : "neg"] = c[key][e.label ? "pos" : "neg"].get<int>() + 1;
    }
    return c;
  };
  counts["train"] = count_split(ds.train);
  counts["test_id"] = count_split(ds.test_id);
  counts["test_ood"] = count_split(ds.test_ood);
  counts["shots"] = count_split(ds.shots);
  m["counts"] = std::move(counts);

  std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
  if (!mf) fail("save_dataset: cannot write manifest");
  mf << m.dump(2) << "\n";
  mf.close();

  write_split(dir + "/train.jsonl", ds.train);
  write_split(dir + "/test_id.jsonl", ds.test_id);
  write_split(dir + "/test_ood.jsonl", ds.test_ood);
  write_split(dir + "/shots.jsonl", ds.shots);
}

Dataset load_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) fail("load_dataset: missing manifest in " + dir);
  json m = json::parse(mf);
  Dataset ds;
  ds.manifest.seed = m.at("seed").get<std::uint64_t>();
  ds.manifest.train_pos = m.at("train_pos").get<int>();
  ds.manifest.train_neg = m.at("train_neg").get<int>();
  ds.manifest.test_pos = m.at("test_pos").get<int>();
  ds.manifest.test_neg = m.at("test_neg").get<int>();
  ds.manifest.shots_per_state = m.at("shots_per_state").get<int>();
  ds.manifest.max_attempts = m.at("max_attempts").get<std::uint64_t>();
  auto states = [&](const char* key) {
    std::vector<StateTemplate> v;
    for (const auto& s : m.at(key)) v.push_back(state_from_json(s));
    return v;
  };
  ds.manifest.splits.train_states = states("train_states");
  ds.manifest.splits.test_id_states = states("test_id_states");
  ds.manifest.splits.test_ood_states = states("test_ood_states");
  ds.manifest.splits.shot_states = states("shot_states");
  ds.train = read_split(dir + "/train.jsonl");
  ds.test_id = read_split(dir + "/test_id.jsonl");
  ds.test_ood = read_split(dir + "/test_ood.jsonl");
  ds.shots = read_split(dir + "/shots.jsonl");
  return ds;
}

}  // namespace phier::scenes
