#include "recall/task/verify.hpp"

#include <algorithm>
#include <set>

namespace recall {

bool VerificationReport::ok() const {
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.passed; });
}

std::string VerificationReport::failures() const {
  std::string out;
  for (const auto& c : checks) {
    if (c.passed) continue;
    if (!out.empty()) out += ", ";
    out += c.name;
  }
  return out;
}

namespace {

using Tokens = std::vector<std::int32_t>;

// Start indices of every contiguous copy of `pat` in `seq`, by direct comparison.
std::vector<std::size_t> find_all(const Tokens& seq, const Tokens& pat) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i + pat.size() <= seq.size(); ++i) {
    bool match = true;
    for (std::size_t j = 0; j < pat.size() && match; ++j) match = seq[i + j] == pat[j];
    if (match) out.push_back(i);
  }
  return out;
}

class Checker {
 public:
  explicit Checker(VerificationReport& r) : r_(r) {}
  bool operator()(std::string name, bool passed, std::string detail = "") {
    r_.checks.push_back({std::move(name), passed, passed ? "" : std::move(detail)});
    return passed;
  }

 private:
  VerificationReport& r_;
};

void verify_ngram(const Example& e, const Vocabulary& vocab, const Tokens& seq, const Tokens& query, Checker& check) {
  const auto& m = e.meta;
  check("query_length", query.size() == m.n, "query has " + std::to_string(query.size()) + " tokens, n=" + std::to_string(m.n));
  check("response_length", e.response.size() == m.k, "response has " + std::to_string(e.response.size()) + " tokens");
  check("context_regular", std::all_of(seq.begin(), seq.end(), [&](auto t) { return vocab.is_regular(t); }),
        "context contains non-regular tokens");
  check("context_length", seq.size() == m.L, "context length differs from meta.L");
  if (query.size() != m.n || m.s == 0) return;

  const auto occ = find_all(seq, query);
  check("first_occurrence", !occ.empty() && occ.front() + 1 == m.l, "meta.l does not match the first occurrence");
  check("candidate_count", m.candidates.size() == m.s, "expected one candidate per segment");

  if (m.s == 1) {
    check("unique_query", occ.size() == 1, "query occurs " + std::to_string(occ.size()) + " times");
    if (occ.size() == 1 && occ[0] + m.n + m.k <= seq.size()) {
      const Tokens follow(seq.begin() + static_cast<std::ptrdiff_t>(occ[0] + m.n),
                          seq.begin() + static_cast<std::ptrdiff_t>(occ[0] + m.n + m.k));
      check("target_follows_query", follow == e.response, "response is not the k-gram after the query");
      check("candidates_match", m.candidates.size() == 1 && m.candidates[0] == follow, "meta candidate mismatch");
    } else {
      check("target_follows_query", false, "no complete k-gram follows the query");
    }
    return;
  }

  const std::size_t seg = seq.size() / m.s;
  check("segments_equal", seg * m.s == seq.size(), "context length is not a multiple of s");
  check("occurrence_count", occ.size() == m.s,
        "query occurs " + std::to_string(occ.size()) + " times for " + std::to_string(m.s) + " segments");
  if (occ.size() != m.s || seg * m.s != seq.size()) return;

  std::vector<Tokens> follows;
  bool inside = true;
  for (std::size_t j = 0; j < m.s; ++j) {
    const std::size_t at = occ[j];
    inside = inside && at >= j * seg && at + m.n + m.k <= (j + 1) * seg;
    follows.emplace_back(seq.begin() + static_cast<std::ptrdiff_t>(std::min(at + m.n, seq.size())),
                         seq.begin() + static_cast<std::ptrdiff_t>(std::min(at + m.n + m.k, seq.size())));
  }
  check("segment_law", inside, "an occurrence or its k-gram is not wholly inside its segment");
  const std::set<Tokens> distinct(follows.begin(), follows.end());
  check("candidates_distinct", distinct.size() == follows.size(), "two segments share the same following k-gram");
  check("candidates_match", m.candidates == follows, "meta candidates differ from the k-grams in the context");
  check("target_first_candidate", e.response == follows.front(), "response is not the first-segment candidate");
}

void verify_position(const Example& e, const Vocabulary& vocab, const Tokens& seq, const Tokens& query,
                     Checker& check) {
  const auto& m = e.meta;
  check("context_length", seq.size() == m.L, "context length differs from meta.L");
  check("context_regular", std::all_of(seq.begin(), seq.end(), [&](auto t) { return vocab.is_regular(t); }),
        "context contains non-regular tokens");
  check("query_length", query.size() == 1, "position query must be one token");
  check("l_in_range", m.l >= 1 && m.l <= m.L, "meta.l outside 1..L");
  if (query.size() != 1) return;
  std::size_t count = 0, index = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq[i] == query[0]) {
      ++count;
      index = i + 1;
    }
  }
  check("unique_query", count == 1, "query token occurs " + std::to_string(count) + " times");
  const bool shape = e.response.size() == 2 && e.response[1] == vocab.eos();
  check("response_shape", shape, "response must be [p_l, EOS]");
  if (count == 1 && shape) {
    check("position_law", vocab.position_index(e.response[0]) == index && index == m.l,
          "response position token does not match a rescan of the context");
  }
}

}  // namespace

VerificationReport verify_example(const Example& e, const Vocabulary& vocab) {
  VerificationReport report;
  Checker check(report);

  // Mask law on the teacher-forcing view.
  const auto mask = e.mask();
  const auto target = e.target();
  bool mask_ok = !e.prompt.empty() && !e.response.empty() && mask.size() == target.size();
  std::size_t on = 0;
  for (std::size_t i = 0; mask_ok && i < mask.size(); ++i) {
    const bool response_pos = i + 1 >= e.prompt.size();
    mask_ok = (mask[i] != 0) == response_pos;
    on += mask[i] != 0;
  }
  check("mask_law", mask_ok && on == e.response.size(), "mask is not true exactly on the response positions");

  const auto seps = find_all(e.prompt, Tokens{vocab.sep()});
  if (!check("single_separator", seps.size() == 1, std::to_string(seps.size()) + " separators in prompt"))
    return report;
  const auto sep = static_cast<std::ptrdiff_t>(seps[0]);
  Tokens before(e.prompt.begin(), e.prompt.begin() + sep), after(e.prompt.begin() + sep + 1, e.prompt.end());
  const bool prefix = e.meta.task == TaskKind::ngram && e.meta.variant == Layout::prefix;
  const Tokens& seq = prefix ? after : before;
  const Tokens& query = prefix ? before : after;
  check("query_regular", std::all_of(query.begin(), query.end(), [&](auto t) { return vocab.is_regular(t); }),
        "query contains non-regular tokens");

  if (e.meta.task == TaskKind::ngram) {
    verify_ngram(e, vocab, seq, query, check);
  } else {
    verify_position(e, vocab, seq, query, check);
  }
  return report;
}

}  // namespace recall
