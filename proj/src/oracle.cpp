#include "phier/oracle.hpp"

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "phier/rng.hpp"

namespace phier::oracle {

using json = nlohmann::ordered_json;

bool valid_predicate_name(const std::string& s) {
  if (s.empty()) return false;
  if (!std::isalpha(static_cast<unsigned char>(s[0]))) return false;
  for (char c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') return false;
  return true;
}

void PredicateTree::add(const PredicateName& node, const PredicateName& parent) {
  if (!valid_predicate_name(node))
    throw std::invalid_argument("PredicateTree: invalid node name '" + node + "'");
  if (contains(node))
    throw std::invalid_argument("PredicateTree: duplicate node '" + node + "'");
  if (parent.empty()) {
    if (!root_.empty())
      throw std::invalid_argument("PredicateTree: second root '" + node + "'");
    root_ = node;
    parent_[node] = "";
    depth_[node] = 0;
    return;
  }
  auto it = depth_.find(parent);
  if (it == depth_.end())
    throw std::invalid_argument("PredicateTree: unknown parent '" + parent + "'");
  parent_[node] = parent;
  depth_[node] = it->second + 1;
}

bool PredicateTree::contains(const PredicateName& node) const {
  return depth_.count(node) > 0;
}

int PredicateTree::depth(const PredicateName& node) const {
  auto it = depth_.find(node);
  if (it == depth_.end())
    throw std::runtime_error("PredicateTree: unknown predicate '" + node + "'");
  return it->second;
}

int PredicateTree::path_distance(const PredicateName& a,
                                 const PredicateName& b) const {
  PredicateName x = a, y = b;
  int da = depth(x), db = depth(y), dist = 0;
  while (da > db) { x = parent_.at(x); --da; ++dist; }
  while (db > da) { y = parent_.at(y); --db; ++dist; }
  while (x != y) {
    x = parent_.at(x);
    y = parent_.at(y);
    dist += 2;
  }
  return dist;
}

int PredicateTree::max_depth() const {
  int m = 0;
  for (auto& [_, d] : depth_) m = std::max(m, d);
  return m;
}

PredicateTree PredicateTree::default_tree() {
  PredicateTree t;
  t.add("State", "");
  t.add("SpatialRelation", "State");
  t.add("Touching", "State");
  t.add("UnaryState", "State");
  t.add("NextTo", "SpatialRelation");
  t.add("Vertical", "SpatialRelation");
  t.add("Containment", "SpatialRelation");
  t.add("Openness", "UnaryState");
  t.add("Power", "UnaryState");
  t.add("OnLeft", "NextTo");
  t.add("OnRight", "NextTo");
  t.add("OnTop", "Vertical");
  t.add("Under", "Vertical");
  t.add("Inside", "Containment");
  t.add("Contains", "Containment");
  t.add("Open", "Openness");
  t.add("Closed", "Openness");
  t.add("TurnedOn", "Power");
  t.add("TurnedOff", "Power");
  return t;
}

std::vector<PredicateName> PredicateTree::default_predicates() {
  return {"NextTo", "OnLeft",  "OnRight",  "OnTop",  "Under",     "Inside",
          "Contains", "Touching", "Open",   "Closed", "TurnedOn", "TurnedOff"};
}

RelationVerdict tree_triplet(const PredicateTree& tree,
                             const PredicateName& anchor,
                             const PredicateName& q1, const PredicateName& q2) {
  if (anchor == q1 || anchor == q2 || q1 == q2)
    throw std::invalid_argument("tree_triplet: predicates must be distinct");
  int d1 = tree.path_distance(anchor, q1);
  int d2 = tree.path_distance(anchor, q2);
  bool q1_positive = d1 != d2 ? d1 < d2 : q1 < q2;
  return q1_positive ? RelationVerdict{anchor, q1, q2}
                     : RelationVerdict{anchor, q2, q1};
}

HierarchyRank tree_rank(const PredicateTree& tree, const PredicateName& a,
                        const PredicateName& b, const PredicateName& c) {
  if (a == b || a == c || b == c)
    throw std::invalid_argument("tree_rank: predicates must be distinct");
  std::array<PredicateName, 3> names{a, b, c};
  std::sort(names.begin(), names.end(),
            [&](const PredicateName& x, const PredicateName& y) {
              int dx = tree.depth(x), dy = tree.depth(y);
              return dx != dy ? dx < dy : x < y;
            });
  return HierarchyRank{names[0], names[1], names[2]};
}

// ---------------------------------------------------------------------------
// prompts
// ---------------------------------------------------------------------------

namespace {

constexpr const char* kTripletTemplate =
    "You are given an anchor text query that describes a state of a scene. "
    "Given two other text queries describing the state of a scene, you will "
    "help determine which of the two queries is more similar to the anchor "
    "query.\n"
    "\n"
    "Consider the semantic meaning of the states and the specific aspects of "
    "the scene they describe. Additionally, think about how many objects and "
    "what kinds of object properties and features you would need to verify "
    "if evaluating these states against an image.\n"
    "\n"
    "The anchor query is the following: {anchor}\n"
    "\n"
    "The other two queries are:\n"
    "Query 1: {query1}\n"
    "Query 2: {query2}\n"
    "\n"
    "You must choose one of the queries as your answer. Respond using the "
    "following format:\n"
    "Answer: [Query 1 or Query 2]\n";

constexpr const char* kRankTemplate =
    "You are an expert in scene understanding and state hierarchy "
    "determination. Given three text descriptions each outlining a potential "
    "state of a scene, your task is to establish a hierarchy among these "
    "descriptions by identifying which one is the most general, which is the "
    "most specific, and which lies in between.\n"
    "\n"
    "Consider the following when determining the hierarchy:\n"
    "- The variety and number of objects required by the state.\n"
    "- The important features of the objects and/or relationships between "
    "the objects.\n"
    "- The level of detail provided about the scene.\n"
    "- The semantic meaning of each description.\n"
    "\n"
    "Your goal is to rank these descriptions in order of specificity, from "
    "least specific (1) to most specific (3).\n"
    "\n"
    "The three descriptions are:\n"
    "1. {anchor}\n"
    "2. {query1}\n"
    "3. {query2}\n"
    "\n"
    "You must provide your ranking using the following format:\n"
    "Least Specific: [content of Description 1, 2, or 3]\n"
    "Intermediate Specific: [content of Description 1, 2, or 3]\n"
    "Most Specific: [content of Description 1, 2, or 3]\n";

std::string substitute_once(std::string text, const std::string& placeholder,
                            const std::string& value) {
  auto pos = text.find(placeholder);
  if (pos == std::string::npos)
    throw std::runtime_error("prompt template: missing placeholder " + placeholder);
  text.replace(pos, placeholder.size(), value);
  return text;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

std::string strip(const std::string& s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::string render_triplet_prompt(const std::string& anchor_query,
                                  const std::string& query1,
                                  const std::string& query2) {
  if (anchor_query.empty() || query1.empty() || query2.empty())
    throw std::invalid_argument("render_triplet_prompt: empty query");
  std::string t = kTripletTemplate;
  t = substitute_once(std::move(t), "{anchor}", anchor_query);
  t = substitute_once(std::move(t), "{query1}", query1);
  t = substitute_once(std::move(t), "{query2}", query2);
  return t;
}

std::string render_rank_prompt(const std::string& q1, const std::string& q2,
                               const std::string& q3) {
  if (q1.empty() || q2.empty() || q3.empty())
    throw std::invalid_argument("render_rank_prompt: empty query");
  std::string t = kRankTemplate;
  t = substitute_once(std::move(t), "{anchor}", q1);
  t = substitute_once(std::move(t), "{query1}", q2);
  t = substitute_once(std::move(t), "{query2}", q3);
  return t;
}

int parse_triplet_response(const std::string& text) {
  for (const std::string& raw : split_lines(text)) {
    std::string line = strip(raw);
    if (line.rfind("Answer:", 0) != 0) continue;
    std::string rest = strip(line.substr(7));
    if (rest == "Query 1") return 1;
    if (rest == "Query 2") return 2;
    throw std::runtime_error("unparseable triplet answer: '" + raw + "'");
  }
  throw std::runtime_error("no 'Answer:' line in response: '" + text + "'");
}

std::array<int, 3> parse_rank_response(const std::string& text,
                                       const std::vector<std::string>& queries) {
  if (queries.size() != 3)
    throw std::invalid_argument("parse_rank_response: need 3 query texts");
  const std::array<std::string, 3> labels{"Least Specific:",
                                          "Intermediate Specific:",
                                          "Most Specific:"};
  std::array<int, 3> out{-1, -1, -1};
  for (const std::string& raw : split_lines(text)) {
    std::string line = strip(raw);
    for (std::size_t li = 0; li < labels.size(); ++li) {
      if (line.rfind(labels[li], 0) != 0) continue;
      std::string content = strip(line.substr(labels[li].size()));
      int idx = -1;
      for (std::size_t qi = 0; qi < 3; ++qi)
        if (content == queries[qi]) idx = static_cast<int>(qi);
      if (idx < 0)
        throw std::runtime_error("rank response names unknown description: '" +
                                 raw + "'");
      out[li] = idx;
    }
  }
  if (out[0] < 0 || out[1] < 0 || out[2] < 0)
    throw std::runtime_error("rank response missing a specificity line: '" +
                             text + "'");
  if (out[0] == out[1] || out[0] == out[2] || out[1] == out[2])
    throw std::runtime_error("rank response repeats a description: '" + text +
                             "'");
  return out;
}

// ---------------------------------------------------------------------------
// cache
// ---------------------------------------------------------------------------

std::string canonical_key(PredicateName a, PredicateName b, PredicateName c) {
  std::array<PredicateName, 3> n{std::move(a), std::move(b), std::move(c)};
  std::sort(n.begin(), n.end());
  return n[0] + "|" + n[1] + "|" + n[2];
}

PredicateName pick_anchor(std::uint64_t seed, const std::string& key) {
  std::vector<std::string> names;
  std::string cur;
  for (char ch : key) {
    if (ch == '|') {
      names.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(ch);
    }
  }
  names.push_back(cur);
  if (names.size() != 3)
    throw std::invalid_argument("pick_anchor: malformed key '" + key + "'");
  std::uint64_t h = rng::derive(seed, rng::fnv1a(key));
  return names[h % 3];
}

const RelationRecord& RelationCache::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end())
    throw std::runtime_error("relation cache miss for triple '" + key + "'");
  return it->second;
}

void RelationCache::put(RelationRecord rec) {
  entries_[rec.key] = std::move(rec);
}

RelationCache RelationCache::load(const std::string& path) {
  RelationCache cache;
  std::ifstream in(path);
  if (!in) return cache;  // absent cache file is an empty cache
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw std::runtime_error("relation cache " + path + ": bad JSON on line " +
                               std::to_string(lineno) + ": " + e.what());
    }
    RelationRecord r;
    r.key = j.at("key").get<std::string>();
    r.anchor = j.at("anchor").get<std::string>();
    r.positive = j.at("positive").get<std::string>();
    r.negative = j.at("negative").get<std::string>();
    r.least = j.at("least").get<std::string>();
    r.middle = j.at("middle").get<std::string>();
    r.most = j.at("most").get<std::string>();
    for (auto& s : j.at("raw_responses"))
      r.raw_responses.push_back(s.get<std::string>());
    cache.put(std::move(r));
  }
  return cache;
}

void RelationCache::save(const std::string& path) const {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out)
      throw std::runtime_error("relation cache: cannot write " + tmp);
    for (auto& [key, r] : entries_) {
      json j;
      j["key"] = r.key;
      j["anchor"] = r.anchor;
      j["positive"] = r.positive;
      j["negative"] = r.negative;
      j["least"] = r.least;
      j["middle"] = r.middle;
      j["most"] = r.most;
      j["raw_responses"] = r.raw_responses;
      out << j.dump() << "\n";
    }
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// subprocess transport
// ---------------------------------------------------------------------------

SubprocessTransport::SubprocessTransport(std::string command, int max_attempts,
                                         int initial_backoff_ms)
    : command_(std::move(command)),
      max_attempts_(max_attempts),
      backoff_ms_(initial_backoff_ms) {
  if (command_.empty())
    throw std::invalid_argument("SubprocessTransport: empty command");
}

namespace {

std::string run_once(const std::string& command, const std::string& prompt) {
  int in_pipe[2], out_pipe[2];
  if (pipe(in_pipe) != 0 || pipe(out_pipe) != 0)
    throw std::runtime_error("transport: pipe() failed");
  pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("transport: fork() failed");
  if (pid == 0) {
    dup2(in_pipe[0], STDIN_FILENO);
    dup2(out_pipe[1], STDOUT_FILENO);
    close(in_pipe[0]);
    close(in_pipe[1]);
    close(out_pipe[0]);
    close(out_pipe[1]);
    execl("/bin/sh", "sh", "-c", command.c_str(), (char*)nullptr);
    _exit(127);
  }
  close(in_pipe[0]);
  close(out_pipe[1]);
  std::size_t off = 0;
  while (off < prompt.size()) {
    ssize_t n = write(in_pipe[1], prompt.data() + off, prompt.size() - off);
    if (n <= 0) break;
    off += static_cast<std::size_t>(n);
  }
  close(in_pipe[1]);
  std::string output;
  char buf[4096];
  ssize_t n;
  while ((n = read(out_pipe[0], buf, sizeof buf)) > 0)
    output.append(buf, static_cast<std::size_t>(n));
  close(out_pipe[0]);
  int status = 0;
  waitpid(pid, &status, 0);
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
    throw std::runtime_error("transport command failed (status " +
                             std::to_string(status) + "): " + command);
  return output;
}

}  // namespace

std::string SubprocessTransport::complete(const std::string& prompt) {
  int backoff = backoff_ms_;
  std::string last_err;
  for (int attempt = 0; attempt < max_attempts_; ++attempt) {
    ++invocations_;
    try {
      return run_once(command_, prompt);
    } catch (const std::exception& e) {
      last_err = e.what();
      std::this_thread::sleep_for(std::chrono::milliseconds(backoff));
      backoff *= 2;
    }
  }
  throw std::runtime_error("transport failed after " +
                           std::to_string(max_attempts_) + " attempts: " +
                           last_err);
}

// ---------------------------------------------------------------------------
// cache population
// ---------------------------------------------------------------------------

namespace {

std::vector<std::array<PredicateName, 3>> all_triples(
    std::vector<PredicateName> preds) {
  std::sort(preds.begin(), preds.end());
  for (auto& p : preds)
    if (!valid_predicate_name(p))
      throw std::invalid_argument("invalid predicate name '" + p + "'");
  std::vector<std::array<PredicateName, 3>> out;
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t j = i + 1; j < preds.size(); ++j)
      for (std::size_t k = j + 1; k < preds.size(); ++k)
        out.push_back({preds[i], preds[j], preds[k]});
  return out;
}

// The two non-anchor names of a sorted triple, in sorted order.
std::array<PredicateName, 2> others(const std::array<PredicateName, 3>& t,
                                    const PredicateName& anchor) {
  std::array<PredicateName, 2> o;
  std::size_t k = 0;
  for (const auto& n : t)
    if (n != anchor) o[k++] = n;
  return o;
}

}  // namespace

RelationCache llm_relations(
    const std::vector<PredicateName>& predicates,
    const std::map<PredicateName, std::string>& query_texts,
    Transport& transport, const std::string& cache_path, std::uint64_t seed) {
  RelationCache cache = RelationCache::load(cache_path);
  bool dirty = false;
  try {
    for (const auto& triple : all_triples(predicates)) {
      std::string key = canonical_key(triple[0], triple[1], triple[2]);
      if (cache.has(key)) continue;
      PredicateName anchor = pick_anchor(seed, key);
      auto qs = others(triple, anchor);
      auto text_of = [&](const PredicateName& p) {
        auto it = query_texts.find(p);
        if (it == query_texts.end())
          throw std::runtime_error("no query text for predicate '" + p + "'");
        return it->second;
      };
      std::string anchor_text = text_of(anchor);
      std::string q1_text = text_of(qs[0]);
      std::string q2_text = text_of(qs[1]);

      RelationRecord rec;
      rec.key = key;
      rec.anchor = anchor;

      std::string resp1 =
          transport.complete(render_triplet_prompt(anchor_text, q1_text, q2_text));
      int pick;
      try {
        pick = parse_triplet_response(resp1);
      } catch (const std::exception& e) {
        throw std::runtime_error("triple " + key + ": " + e.what());
      }
      rec.positive = pick == 1 ? qs[0] : qs[1];
      rec.negative = pick == 1 ? qs[1] : qs[0];

      std::string resp2 =
          transport.complete(render_rank_prompt(anchor_text, q1_text, q2_text));
      std::array<PredicateName, 3> by_pos{anchor, qs[0], qs[1]};
      std::array<int, 3> order;
      try {
        order = parse_rank_response(resp2, {anchor_text, q1_text, q2_text});
      } catch (const std::exception& e) {
        throw std::runtime_error("triple " + key + ": " + e.what());
      }
      rec.least = by_pos[order[0]];
      rec.middle = by_pos[order[1]];
      rec.most = by_pos[order[2]];
      rec.raw_responses = {resp1, resp2};
      cache.put(std::move(rec));
      dirty = true;
    }
  } catch (...) {
    if (dirty) cache.save(cache_path);  // keep successfully fetched triples
    throw;
  }
  if (dirty || !std::filesystem::exists(cache_path)) cache.save(cache_path);
  return cache;
}

RelationCache tree_relations(const PredicateTree& tree,
                             const std::vector<PredicateName>& predicates,
                             std::uint64_t seed) {
  RelationCache cache;
  for (const auto& triple : all_triples(predicates)) {
    std::string key = canonical_key(triple[0], triple[1], triple[2]);
    PredicateName anchor = pick_anchor(seed, key);
    auto qs = others(triple, anchor);
    RelationVerdict v = tree_triplet(tree, anchor, qs[0], qs[1]);
    HierarchyRank r = tree_rank(tree, triple[0], triple[1], triple[2]);
    RelationRecord rec;
    rec.key = key;
    rec.anchor = v.anchor;
    rec.positive = v.positive;
    rec.negative = v.negative;
    rec.least = r.least;
    rec.middle = r.middle;
    rec.most = r.most;
    cache.put(std::move(rec));
  }
  return cache;
}

RelationRecord TreeProvider::get(const PredicateName& a, const PredicateName& b,
                                 const PredicateName& c) {
  std::string key = canonical_key(a, b, c);
  PredicateName anchor = pick_anchor(seed_, key);
  std::array<PredicateName, 3> t{a, b, c};
  std::sort(t.begin(), t.end());
  auto qs = others(t, anchor);
  RelationVerdict v = tree_triplet(tree_, anchor, qs[0], qs[1]);
  HierarchyRank r = tree_rank(tree_, a, b, c);
  return RelationRecord{key, v.anchor, v.positive, v.negative,
                        r.least, r.middle, r.most, {}};
}

RelationRecord CacheProvider::get(const PredicateName& a,
                                  const PredicateName& b,
                                  const PredicateName& c) {
  return cache_.get(canonical_key(a, b, c));
}

}  // namespace phier::oracle
