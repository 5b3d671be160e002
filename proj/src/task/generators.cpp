#include "recall/task/generators.hpp"

#include <algorithm>
#include <cmath>

#include "recall/core/errors.hpp"
#include "recall/core/json_fields.hpp"
#include "recall/core/rng.hpp"

namespace recall {

Vocabulary TaskConfig::vocab() const {
  Vocabulary v;
  v.n_regular = n_regular;
  if (kind == TaskKind::position) v.n_positions = max_positions == 0 ? seq_len : max_positions;
  return v;
}

std::vector<std::string> validate(const TaskConfig& c) {
  std::vector<std::string> errs;
  if (c.n_regular < 2) errs.push_back("n_regular must be >= 2");
  if (c.kind == TaskKind::ngram) {
    if (c.n == 0) errs.push_back("n must be >= 1");
    if (c.k == 0) errs.push_back("k must be >= 1");
    if (c.duplicates == 0) errs.push_back("duplicates must be >= 1");
    if (c.min_len > c.max_len) errs.push_back("min_len exceeds max_len");
    const std::size_t need = std::max<std::size_t>(c.duplicates, 1) * (c.n + c.k);
    if (c.min_len < need)
      errs.push_back("min_len " + std::to_string(c.min_len) + " is below duplicates*(n+k) = " + std::to_string(need));
    if (c.duplicates > 1 && c.n_regular >= 2) {
      // Pairwise-distinct k-grams need n_regular^k >= duplicates.
      const double kgrams = std::pow(static_cast<double>(c.n_regular), static_cast<double>(c.k));
      if (kgrams < static_cast<double>(c.duplicates))
        errs.push_back("n_regular^k is too small for " + std::to_string(c.duplicates) + " distinct k-grams");
    }
  } else {
    if (c.seq_len == 0) errs.push_back("seq_len must be >= 1");
    if (c.n_regular < c.seq_len)
      errs.push_back("position retrieval needs n_regular >= seq_len (" + std::to_string(c.n_regular) + " < " +
                     std::to_string(c.seq_len) + ")");
    if (c.max_positions != 0 && c.max_positions < c.seq_len)
      errs.push_back("max_positions must be 0 or >= seq_len");
  }
  return errs;
}

nlohmann::ordered_json to_json(const TaskConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = to_string(c.kind);
  j["n_regular"] = c.n_regular;
  if (c.kind == TaskKind::ngram) {
    j["n"] = c.n;
    j["k"] = c.k;
    j["layout"] = to_string(c.layout);
    j["min_len"] = c.min_len;
    j["max_len"] = c.max_len;
    j["duplicates"] = c.duplicates;
  } else {
    j["seq_len"] = c.seq_len;
    j["max_positions"] = c.vocab().n_positions;
  }
  return j;
}

TaskConfig task_config_from_json(const nlohmann::json& j, std::vector<std::string>& errors) {
  TaskConfig c;
  FieldReader r(j, "task", errors);
  r.read_enum("kind", c.kind, parse_task_kind);
  r.read("n_regular", c.n_regular);
  r.read("n", c.n);
  r.read("k", c.k);
  r.read_enum("layout", c.layout, parse_layout);
  r.read("min_len", c.min_len);
  r.read("max_len", c.max_len);
  r.read("duplicates", c.duplicates);
  r.read("seq_len", c.seq_len);
  r.read("max_positions", c.max_positions);
  r.finish();
  const bool ng = c.kind == TaskKind::ngram;
  const std::string ctx = "task kind " + to_string(c.kind);
  for (const char* key : {"n", "k", "layout", "min_len", "max_len", "duplicates"}) r.require_relevant(key, ng, ctx);
  for (const char* key : {"seq_len", "max_positions"}) r.require_relevant(key, !ng, ctx);
  for (auto& e : validate(c)) errors.push_back("task: " + e);
  return c;
}

namespace {

using Tokens = std::vector<std::int32_t>;

std::vector<std::size_t> occurrences(const Tokens& seq, const Tokens& pat) {
  std::vector<std::size_t> at;
  if (pat.size() > seq.size()) return at;
  for (std::size_t i = 0; i + pat.size() <= seq.size(); ++i)
    if (std::equal(pat.begin(), pat.end(), seq.begin() + static_cast<std::ptrdiff_t>(i))) at.push_back(i);
  return at;
}

Tokens random_tokens(Rng& rng, std::size_t count, std::size_t n_regular) {
  Tokens t(count);
  for (auto& v : t) v = static_cast<std::int32_t>(rng.below(n_regular));
  return t;
}

// A candidate placement: context with the query planted once per segment.
struct Placement {
  Tokens seq;
  Tokens query;
  std::vector<Tokens> answers;
  std::vector<std::size_t> starts;  // absolute query start per segment
};

Placement sample_placement(Rng& rng, const TaskConfig& c, std::size_t len) {
  const std::size_t s = c.duplicates, seg = len / s;
  Placement p;
  p.seq = random_tokens(rng, seg * s, c.n_regular);
  p.query = random_tokens(rng, c.n, c.n_regular);
  while (p.answers.size() < s) {
    Tokens a = random_tokens(rng, c.k, c.n_regular);
    if (std::find(p.answers.begin(), p.answers.end(), a) == p.answers.end()) p.answers.push_back(std::move(a));
  }
  for (std::size_t j = 0; j < s; ++j) {
    const std::size_t at = j * seg + rng.below(seg - c.n - c.k + 1);
    std::copy(p.query.begin(), p.query.end(), p.seq.begin() + static_cast<std::ptrdiff_t>(at));
    std::copy(p.answers[j].begin(), p.answers[j].end(), p.seq.begin() + static_cast<std::ptrdiff_t>(at + c.n));
    p.starts.push_back(at);
  }
  return p;
}

bool is_valid(const Placement& p) { return occurrences(p.seq, p.query) == p.starts; }

bool is_protected(const Placement& p, std::size_t pos, std::size_t width) {
  for (std::size_t at : p.starts)
    if (pos >= at && pos < at + width) return true;
  return false;
}

// Resamples one unprotected token of each stray occurrence until none remain.
bool repair(Rng& rng, Placement& p, const TaskConfig& c) {
  const std::size_t width = c.n + c.k;
  for (std::size_t step = 0; step < 10 * p.seq.size(); ++step) {
    const auto occ = occurrences(p.seq, p.query);
    auto stray = std::find_if(occ.begin(), occ.end(), [&](std::size_t q) {
      return std::find(p.starts.begin(), p.starts.end(), q) == p.starts.end();
    });
    if (stray == occ.end()) return true;
    std::vector<std::size_t> free;
    for (std::size_t i = *stray; i < *stray + c.n; ++i)
      if (!is_protected(p, i, width)) free.push_back(i);
    if (free.empty()) return false;  // stray lies inside planted tokens; needs a new draw
    const std::size_t pos = free[rng.below(free.size())];
    const auto old = p.seq[pos];
    auto repl = static_cast<std::int32_t>(rng.below(c.n_regular - 1));
    if (repl >= old) ++repl;
    p.seq[pos] = repl;
  }
  return is_valid(p);
}

Example assemble(const TaskConfig& c, const Placement& p) {
  const Vocabulary v = c.vocab();
  Example e;
  if (c.layout == Layout::suffix) {
    e.prompt = p.seq;
    e.prompt.push_back(v.sep());
    e.prompt.insert(e.prompt.end(), p.query.begin(), p.query.end());
  } else {
    e.prompt = p.query;
    e.prompt.push_back(v.sep());
    e.prompt.insert(e.prompt.end(), p.seq.begin(), p.seq.end());
  }
  e.response = p.answers.front();
  e.meta.task = TaskKind::ngram;
  e.meta.variant = c.layout;
  e.meta.n = c.n;
  e.meta.k = c.k;
  e.meta.L = p.seq.size();
  e.meta.l = p.starts.front() + 1;
  e.meta.s = c.duplicates;
  e.meta.candidates = p.answers;
  return e;
}

void check_task(const TaskConfig& c, TaskKind kind) {
  require(c.kind == kind, "generator called with a " + to_string(c.kind) + " task config");
  const auto errs = validate(c);
  if (!errs.empty()) throw ConfigError("invalid task config: " + errs.front());
}

}  // namespace

Example gen_ngram_example(std::uint64_t seed, const TaskConfig& c) {
  check_task(c, TaskKind::ngram);
  Rng rng(seed);
  const std::size_t len = c.min_len + rng.below(c.max_len - c.min_len + 1);
  constexpr int kRetries = 100;
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    Placement p = sample_placement(rng, c, len);
    if (is_valid(p)) return assemble(c, p);
  }
  for (int attempt = 0; attempt < kRetries; ++attempt) {
    Placement p = sample_placement(rng, c, len);
    if (repair(rng, p, c) && is_valid(p)) return assemble(c, p);
  }
  throw GenerationError("n-gram generator: could not place " + std::to_string(c.duplicates) +
                        " query occurrence(s) with no stray copies (n=" + std::to_string(c.n) +
                        ", n_regular=" + std::to_string(c.n_regular) + ", length=" + std::to_string(len) + ")");
}

Example gen_position_example(std::uint64_t seed, const TaskConfig& c, std::size_t forced_l) {
  check_task(c, TaskKind::position);
  const Vocabulary v = c.vocab();
  const std::size_t L = c.seq_len;
  require(forced_l <= L, "forced query index " + std::to_string(forced_l) + " exceeds L=" + std::to_string(L));
  Rng rng(seed);
  // Partial Fisher-Yates: L distinct tokens without replacement.
  Tokens pool(c.n_regular);
  for (std::size_t i = 0; i < pool.size(); ++i) pool[i] = static_cast<std::int32_t>(i);
  for (std::size_t i = 0; i < L; ++i) std::swap(pool[i], pool[i + rng.below(pool.size() - i)]);
  Tokens seq(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(L));
  const std::size_t l = forced_l != 0 ? forced_l : 1 + rng.below(L);

  Example e;
  e.prompt = seq;
  e.prompt.push_back(v.sep());
  e.prompt.push_back(seq[l - 1]);
  e.response = {v.position(l), v.eos()};
  e.meta.task = TaskKind::position;
  e.meta.L = L;
  e.meta.l = l;
  return e;
}

Example generate_example(std::uint64_t seed, const TaskConfig& cfg) {
  return cfg.kind == TaskKind::ngram ? gen_ngram_example(seed, cfg) : gen_position_example(seed, cfg);
}

std::vector<Example> generate_examples(std::uint64_t stream_seed, std::size_t count, const TaskConfig& cfg) {
  std::vector<Example> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(generate_example(derive_seed(stream_seed, i), cfg));
  return out;
}

}  // namespace recall
