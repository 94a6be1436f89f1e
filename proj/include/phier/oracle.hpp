#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace phier::oracle {

using PredicateName = std::string;

// Token predicate names: [A-Za-z][A-Za-z0-9_]*
bool valid_predicate_name(const std::string& s);

// Rooted tree over predicate names plus structural category nodes.
// Depth and path distance drive the ground-truth relation oracle.
class PredicateTree {
 public:
  // root must be inserted first (parent = "").
  void add(const PredicateName& node, const PredicateName& parent);
  bool contains(const PredicateName& node) const;
  int depth(const PredicateName& node) const;
  int path_distance(const PredicateName& a, const PredicateName& b) const;
  int max_depth() const;

  // The synthetic default hierarchy used by scenes and tests.
  static PredicateTree default_tree();
  // The 12 predicates of the default benchmark (leaves of default_tree).
  static std::vector<PredicateName> default_predicates();

 private:
  std::map<PredicateName, PredicateName> parent_;
  std::map<PredicateName, int> depth_;
  std::string root_;
};

struct RelationVerdict {
  PredicateName anchor, positive, negative;
};

struct HierarchyRank {
  PredicateName least, middle, most;
};

// positive = the candidate with smaller tree-path distance to the anchor;
// ties broken by lexicographically smaller name.
RelationVerdict tree_triplet(const PredicateTree& tree,
                             const PredicateName& anchor,
                             const PredicateName& q1, const PredicateName& q2);

// Ordered by node depth ascending; depth ties broken lexicographically.
HierarchyRank tree_rank(const PredicateTree& tree, const PredicateName& a,
                        const PredicateName& b, const PredicateName& c);

// ---- prompt rendering / response parsing ----

std::string render_triplet_prompt(const std::string& anchor_query,
                                  const std::string& query1,
                                  const std::string& query2);
std::string render_rank_prompt(const std::string& q1, const std::string& q2,
                               const std::string& q3);

// "Answer: Query 1|Query 2" -> 1 or 2. Throws std::runtime_error with the
// raw text on anything else.
int parse_triplet_response(const std::string& text);
// "Least/Intermediate/Most Specific:" lines whose contents byte-match the
// given query texts; returns indices (0-based) in least,middle,most order.
std::array<int, 3> parse_rank_response(const std::string& text,
                                       const std::vector<std::string>& queries);

// ---- cache ----

struct RelationRecord {
  std::string key;
  PredicateName anchor, positive, negative;
  PredicateName least, middle, most;
  std::vector<std::string> raw_responses;
};

// Canonical unordered-triple key: sorted names joined by "|".
std::string canonical_key(PredicateName a, PredicateName b, PredicateName c);

// Seeded, order-independent anchor choice for a canonical triple.
PredicateName pick_anchor(std::uint64_t seed, const std::string& key);

class RelationCache {
 public:
  bool has(const std::string& key) const { return entries_.count(key) > 0; }
  const RelationRecord& get(const std::string& key) const;
  void put(RelationRecord rec);
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, RelationRecord>& entries() const {
    return entries_;
  }

  // Line-delimited JSON records; written atomically (temp file + rename).
  static RelationCache load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::map<std::string, RelationRecord> entries_;
};

// ---- transports ----

class Transport {
 public:
  virtual ~Transport() = default;
  virtual std::string complete(const std::string& prompt) = 0;
};

// Runs a shell command; prompt on stdin, completion read from stdout,
// exit code 0 required. Retries with exponential backoff, then throws.
class SubprocessTransport : public Transport {
 public:
  explicit SubprocessTransport(std::string command, int max_attempts = 3,
                               int initial_backoff_ms = 100);
  std::string complete(const std::string& prompt) override;
  int invocations() const { return invocations_; }

 private:
  std::string command_;
  int max_attempts_;
  int backoff_ms_;
  int invocations_ = 0;
};

// ---- cache population ----

// Covers every unordered triple of `predicates`; prompts carry the
// natural-language query of each predicate from `query_texts`. Existing
// cache entries are kept and their triples skip the transport entirely.
RelationCache llm_relations(
    const std::vector<PredicateName>& predicates,
    const std::map<PredicateName, std::string>& query_texts,
    Transport& transport, const std::string& cache_path, std::uint64_t seed);

// Same record layout produced by the ground-truth tree (no transport).
RelationCache tree_relations(const PredicateTree& tree,
                             const std::vector<PredicateName>& predicates,
                             std::uint64_t seed);

// ---- provider used by the trainer ----

class RelationProvider {
 public:
  virtual ~RelationProvider() = default;
  // key must be canonical; throws on a miss in cache-only mode.
  virtual RelationRecord get(const PredicateName& a, const PredicateName& b,
                             const PredicateName& c) = 0;
};

class TreeProvider : public RelationProvider {
 public:
  TreeProvider(PredicateTree tree, std::uint64_t seed)
      : tree_(std::move(tree)), seed_(seed) {}
  RelationRecord get(const PredicateName& a, const PredicateName& b,
                     const PredicateName& c) override;

 private:
  PredicateTree tree_;
  std::uint64_t seed_;
};

class CacheProvider : public RelationProvider {
 public:
  explicit CacheProvider(RelationCache cache) : cache_(std::move(cache)) {}
  RelationRecord get(const PredicateName& a, const PredicateName& b,
                     const PredicateName& c) override;

 private:
  RelationCache cache_;
};

}  // namespace phier::oracle
