#include "recall/blocks/model.hpp"

#include "recall/core/ops.hpp"

namespace recall {

template <class Real>
Var<Real> twostream_forward(BoundParams<Real>& p, const ModelConfig& cfg, const std::string& prefix, Var<Real> x,
                            bool reversed) {
  Var<Real> ssm = ssm_block_delta(p, cfg, prefix, x);
  Var<Real> attn = attn_block_delta(p, cfg, prefix, x);
  Var<Real> gate = ops::tanh(p(prefix + "gate"));
  Var<Real> fused = reversed ? ops::add(attn, ops::mul_scalar(ssm, gate)) : ops::add(ssm, ops::mul_scalar(attn, gate));
  return ops::add(x, fused);
}

template <class Real>
Var<Real> model_forward(Tape<Real>& tape, const ModelConfig& cfg, ParameterSet<Real>& params,
                        const TokenBatch& tokens) {
  BoundParams<Real> p(tape, params);
  return model_forward(p, cfg, tokens);
}

template <class Real>
Var<Real> model_forward(BoundParams<Real>& p, const ModelConfig& cfg, const TokenBatch& tokens) {
  require(tokens.ids.size() == tokens.batch * tokens.length && tokens.length > 0,
          "model_forward: token batch shape does not match id count");
  for (std::int32_t id : tokens.ids) {
    require(id >= 0 && static_cast<std::size_t>(id) < cfg.vocab_size,
            "model_forward: token id " + std::to_string(id) + " out of range for V=" + std::to_string(cfg.vocab_size));
  }
  const LayerSchedule schedule = build_layer_schedule(cfg);
  Var<Real> x = ops::embedding(p(kEmbedName), tokens.ids, Shape{tokens.batch, tokens.length});
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const std::string prefix = layer_prefix(i);
    switch (schedule[i]) {
      case BlockKind::attn: x = ops::add(x, attn_block_delta(p, cfg, prefix, x)); break;
      case BlockKind::ssm: x = ssm_block_forward(p, cfg, prefix, x); break;
      case BlockKind::twostream:
        x = twostream_forward(p, cfg, prefix, x, cfg.family == Family::hybrid_twostream_reversed);
        break;
    }
  }
  x = ops::rms_norm(x, p("final_norm"));
  return ops::matmul(x, p(kHeadName));
}

template <class Real>
Tensor<Real> model_logits(const ModelConfig& cfg, ParameterSet<Real>& params, const TokenBatch& tokens) {
  Tape<Real> tape;
  tape.set_grad_enabled(false);
  return tape.tensor(model_forward(tape, cfg, params, tokens));
}

#define RECALL_INSTANTIATE_MODEL(R)                                                                         \
  template Var<R> twostream_forward(BoundParams<R>&, const ModelConfig&, const std::string&, Var<R>, bool); \
  template Var<R> model_forward(Tape<R>&, const ModelConfig&, ParameterSet<R>&, const TokenBatch&);         \
  template Var<R> model_forward(BoundParams<R>&, const ModelConfig&, const TokenBatch&);                    \
  template Tensor<R> model_logits(const ModelConfig&, ParameterSet<R>&, const TokenBatch&);

RECALL_INSTANTIATE_MODEL(float)
RECALL_INSTANTIATE_MODEL(double)

}  // namespace recall
