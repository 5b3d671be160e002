#include "recall/train/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "recall/core/errors.hpp"
#include "recall/core/rng.hpp"

namespace recall {

Batch make_batch(std::span<const Example> examples) {
  require(!examples.empty(), "make_batch: no examples");
  std::size_t T = 0;
  for (const auto& e : examples) T = std::max(T, e.length());
  Batch b;
  b.tokens.batch = examples.size();
  b.tokens.length = T;
  b.tokens.ids.assign(examples.size() * T, 0);
  b.targets.assign(examples.size() * T, 0);
  b.mask.assign(examples.size() * T, 0);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto in = examples[i].input();
    const auto tg = examples[i].target();
    const auto mk = examples[i].mask();
    std::copy(in.begin(), in.end(), b.tokens.ids.begin() + static_cast<std::ptrdiff_t>(i * T));
    std::copy(tg.begin(), tg.end(), b.targets.begin() + static_cast<std::ptrdiff_t>(i * T));
    std::copy(mk.begin(), mk.end(), b.mask.begin() + static_cast<std::ptrdiff_t>(i * T));
  }
  return b;
}

std::int32_t argmax_row(std::span<const float> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return static_cast<std::int32_t>(best);
}

namespace {

template <class Fn>
void for_each_batch(std::span<const Example> examples, Fn fn) {
  for (std::size_t lo = 0; lo < examples.size(); lo += kEvalBatch) {
    const std::size_t hi = std::min(examples.size(), lo + kEvalBatch);
    fn(examples.subspan(lo, hi - lo));
  }
}

std::span<const float> logit_row(const Tensor<float>& logits, std::size_t b, std::size_t t, std::size_t T,
                                 std::size_t V) {
  return {logits.data.data() + (b * T + t) * V, V};
}

}  // namespace

double string_accuracy(LanguageModel& model, std::span<const Example> examples) {
  if (examples.empty()) return 0.0;
  std::size_t correct = 0;
  const std::size_t V = model.vocab_size();
  for_each_batch(examples, [&](std::span<const Example> chunk) {
    const Batch b = make_batch(chunk);
    const Tensor<float> logits = model.logits(b.tokens);
    const std::size_t T = b.tokens.length;
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      bool ok = true;
      for (std::size_t t = 0; t < T && ok; ++t) {
        if (!b.mask[i * T + t]) continue;
        ok = argmax_row(logit_row(logits, i, t, T, V)) == b.targets[i * T + t];
      }
      correct += ok;
    }
  });
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

double mean_masked_loss(LanguageModel& model, std::span<const Example> examples) {
  double total = 0;
  std::size_t count = 0;
  const std::size_t V = model.vocab_size();
  for_each_batch(examples, [&](std::span<const Example> chunk) {
    const Batch b = make_batch(chunk);
    const Tensor<float> logits = model.logits(b.tokens);
    const std::size_t T = b.tokens.length;
    for (std::size_t i = 0; i < b.mask.size(); ++i) {
      if (!b.mask[i]) continue;
      const auto row = logit_row(logits, i / T, i % T, T, V);
      const double mx = *std::max_element(row.begin(), row.end());
      double z = 0;
      for (float v : row) z += std::exp(static_cast<double>(v) - mx);
      total += mx + std::log(z) - static_cast<double>(row[static_cast<std::size_t>(b.targets[i])]);
      ++count;
    }
  });
  return count == 0 ? 0.0 : total / static_cast<double>(count);
}

std::vector<std::vector<std::int32_t>> greedy_decode(LanguageModel& model,
                                                     const std::vector<std::vector<std::int32_t>>& prompts,
                                                     std::size_t max_new, std::int32_t eos) {
  const std::size_t V = model.vocab_size();
  std::vector<std::vector<std::int32_t>> out(prompts.size());
  for (std::size_t lo = 0; lo < prompts.size(); lo += kEvalBatch) {
    const std::size_t hi = std::min(prompts.size(), lo + kEvalBatch);
    std::vector<std::vector<std::int32_t>> seqs(prompts.begin() + static_cast<std::ptrdiff_t>(lo),
                                                prompts.begin() + static_cast<std::ptrdiff_t>(hi));
    std::vector<bool> done(seqs.size(), false);
    for (const auto& s : seqs) require(!s.empty(), "greedy_decode: empty prompt");
    for (std::size_t step = 0; step < max_new; ++step) {
      std::vector<std::size_t> active;
      for (std::size_t i = 0; i < seqs.size(); ++i)
        if (!done[i]) active.push_back(i);
      if (active.empty()) break;
      std::size_t T = 0;
      for (std::size_t i : active) T = std::max(T, seqs[i].size());
      TokenBatch tb{active.size(), T, std::vector<std::int32_t>(active.size() * T, 0)};
      for (std::size_t r = 0; r < active.size(); ++r)
        std::copy(seqs[active[r]].begin(), seqs[active[r]].end(), tb.ids.begin() + static_cast<std::ptrdiff_t>(r * T));
      const Tensor<float> logits = model.logits(tb);
      for (std::size_t r = 0; r < active.size(); ++r) {
        auto& s = seqs[active[r]];
        const std::int32_t next = argmax_row(logit_row(logits, r, s.size() - 1, T, V));
        s.push_back(next);
        out[lo + active[r]].push_back(next);
        if (next == eos) done[active[r]] = true;
      }
    }
  }
  return out;
}

std::vector<std::int32_t> greedy_decode(LanguageModel& model, const std::vector<std::int32_t>& prompt,
                                        std::size_t max_new, std::int32_t eos) {
  return greedy_decode(model, std::vector<std::vector<std::int32_t>>{prompt}, max_new, eos).front();
}

double greedy_accuracy(LanguageModel& model, std::span<const Example> examples, std::int32_t eos) {
  if (examples.empty()) return 0.0;
  std::vector<std::vector<std::int32_t>> prompts;
  std::size_t max_new = 0;
  for (const auto& e : examples) {
    prompts.push_back(e.prompt);
    max_new = std::max(max_new, e.response.size());
  }
  const auto outs = greedy_decode(model, prompts, max_new, eos);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& want = examples[i].response;
    const auto& got = outs[i];
    // Compare the first |response| generated tokens.
    correct += got.size() >= want.size() && std::equal(want.begin(), want.end(), got.begin());
  }
  return static_cast<double>(correct) / static_cast<double>(examples.size());
}

std::vector<LengthAccuracy> extrapolation_sweep(LanguageModel& model, const TaskConfig& task,
                                                const std::vector<std::size_t>& lengths,
                                                std::size_t samples_per_length, std::uint64_t seed) {
  std::vector<LengthAccuracy> out;
  const std::int32_t eos = task.vocab().eos();
  for (std::size_t len : lengths) {
    TaskConfig at = task;
    if (task.kind == TaskKind::position) {
      if (len > task.vocab().n_positions)
        throw ConfigError("extrapolation length " + std::to_string(len) + " exceeds the " +
                          std::to_string(task.vocab().n_positions) + " position tokens in the vocabulary");
      at.seq_len = len;
      at.max_positions = task.vocab().n_positions;
    } else {
      at.min_len = at.max_len = len;
    }
    const auto examples = generate_examples(derive_seed(seed, len), samples_per_length, at);
    out.push_back({len, greedy_accuracy(model, examples, eos), samples_per_length});
  }
  return out;
}

std::vector<double> per_position_accuracy(LanguageModel& model, const TaskConfig& task,
                                          std::size_t samples_per_index, std::uint64_t seed) {
  require(task.kind == TaskKind::position, "per_position_accuracy: requires the position task");
  std::vector<double> acc;
  for (std::size_t l = 1; l <= task.seq_len; ++l) {
    std::vector<Example> bucket;
    const std::uint64_t stream = derive_seed(seed, l);
    for (std::size_t i = 0; i < samples_per_index; ++i)
      bucket.push_back(gen_position_example(derive_seed(stream, i), task, l));
    acc.push_back(string_accuracy(model, bucket));
  }
  return acc;
}

PreferenceResult duplicate_preference(LanguageModel& model, const TaskConfig& task, std::size_t s,
                                      std::size_t samples, std::uint64_t seed) {
  require(task.kind == TaskKind::ngram, "duplicate_preference: requires the n-gram task");
  TaskConfig dup = task;
  dup.duplicates = s;
  dup.min_len = std::max(dup.min_len, s * (dup.n + dup.k));
  dup.max_len = std::max(dup.max_len, dup.min_len);
  const auto examples = generate_examples(seed, samples, dup);
  std::vector<std::vector<std::int32_t>> prompts;
  for (const auto& e : examples) prompts.push_back(e.prompt);
  const auto outs = greedy_decode(model, prompts, dup.k, -1);

  PreferenceResult r;
  r.s = s;
  r.samples = samples;
  r.counts.assign(s, 0);
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& cands = examples[i].meta.candidates;
    std::size_t matched = s;
    for (std::size_t j = 0; j < cands.size(); ++j) {
      if (cands[j] != outs[i]) continue;
      require(matched == s, "duplicate_preference: output matches two candidates");
      matched = j;
    }
    if (matched == s) {
      ++r.errors;
    } else {
      ++r.counts[matched];
    }
  }
  r.error_rate = samples == 0 ? 0.0 : static_cast<double>(r.errors) / static_cast<double>(samples);
  const std::size_t hits = samples - r.errors;
  r.preference.assign(s, 0.0);
  if (hits > 0)
    for (std::size_t j = 0; j < s; ++j) r.preference[j] = static_cast<double>(r.counts[j]) / static_cast<double>(hits);
  return r;
}

LossFloor loss_floor(std::size_t V) {
  require(V >= 2, "loss_floor: V must be >= 2");
  const double l = std::log(static_cast<double>(V));
  return {l, l / 2.0};
}

}  // namespace recall
