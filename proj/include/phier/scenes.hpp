#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "phier/numcore.hpp"

namespace phier::scenes {

inline constexpr int kGridSize = 8;
inline constexpr int kRenderScale = 4;
inline constexpr int kRenderSize = kGridSize * kRenderScale;  // 32
inline constexpr int kChannels = 10;  // 8 categories + openness + power

// Category order fixes the render channel layout.
enum class Category : int {
  cup = 0,
  plate,
  block_red,
  block_blue,
  cabinet,
  microwave,
  lamp,
  box,
};
inline constexpr int kCategoryCount = 8;

const std::string& category_name(Category c);
Category category_from_name(const std::string& name);
bool is_container(Category c);   // cabinet, microwave, box
bool has_power(Category c);      // lamp
// Fixed footprint per category (w, h in grid cells).
std::pair<int, int> category_size(Category c);

struct SceneObject {
  int id = 0;
  Category cat = Category::cup;
  int x = 0, y = 0, w = 1, h = 1;  // grid-cell rectangle
  std::optional<bool> open_state;      // containers only
  std::optional<bool> power_state;     // lamp only
  std::optional<int> contained_in;     // container object id
};

struct Scene {
  std::vector<SceneObject> objects;
  std::uint64_t seed = 0;
};

struct Query {
  std::string predicate;
  std::string obj1;                 // category name
  std::optional<std::string> obj2;  // absent for unary predicates
};

struct Example {
  Scene scene;
  Query query;
  bool label = false;
  std::string split_tag;  // id | ood_unseen_combo | ood_novel_pred
};

bool is_unary_predicate(const std::string& predicate);

// Ground-truth semantics over grid rectangles and object state flags.
// Throws on unknown predicates, missing/ambiguous objects, arity mismatch,
// and unary predicates applied to objects without the matching state.
bool eval_predicate(const Scene& scene, const Query& query);

// 32 x 32 x 10 channel-last occupancy render; openness in channel 8,
// power in channel 9.
numcore::Tensor render(const Scene& scene);

// "Is the {obj1} {predicate}" / "Is the {obj1} {predicate} the {obj2}"
std::string query_text(const Query& q);

// ---- dataset definition ----

struct StateTemplate {
  Query query;
  std::string split_tag;
};

struct SplitConfig {
  std::vector<StateTemplate> train_states;       // tag id
  std::vector<StateTemplate> test_id_states;     // tag id
  std::vector<StateTemplate> test_ood_states;    // tags ood_*
  std::vector<StateTemplate> shot_states;        // tag ood_novel_pred
};

// Default split: 8 ID predicates over designated pairs; OOD = same
// predicates over withheld pairs plus 4 novel predicates. Throws when the
// ID and novel predicate sets overlap.
SplitConfig split_states();

struct DatasetManifest {
  std::uint64_t seed = 0;
  int train_pos = 100, train_neg = 100;  // per ID state
  int test_pos = 25, test_neg = 25;      // per test state
  int shots_per_state = 5;               // novel-predicate adaptation set
  std::uint64_t max_attempts = 1000000;  // rejection-sampling cap per state
  SplitConfig splits;
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Example> train;
  std::vector<Example> test_id;
  std::vector<Example> test_ood;
  std::vector<Example> shots;
};

// Rejection-samples scenes until every state meets its label quotas;
// deterministic in the manifest seed. Throws (naming the state) when a
// quota is unreachable within max_attempts.
Dataset generate_dataset(const DatasetManifest& manifest);

// ---- serialization ----
// Layout: <dir>/manifest.json plus one JSONL file per split
// (train/test_id/test_ood/shots); images are re-rendered on load.

void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

std::string example_to_json(const Example& e);
Example example_from_json(const std::string& line);

}  // namespace phier::scenes
