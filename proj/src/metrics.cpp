#include "bltd/metrics.hpp"

#include <cmath>
#include <set>

#include "bltd/kernels.hpp"

namespace bltd {

ComponentParams ComponentParams::from_model(const HierarchicalModel& m,
                                            int bytes_per_param) {
  ComponentParams p;
  p.p_dec = m.param_count_decoder();
  p.p_enc = m.param_count_encoder();
  p.p_glob = m.param_count_global();
  p.bytes_per_param = bytes_per_param;
  return p;
}

double memory_bandwidth_gb(int64_t decoder_nfes, int64_t encoder_global_nfes,
                           const ComponentParams& p) {
  double b = static_cast<double>(p.bytes_per_param);
  return b *
         (static_cast<double>(decoder_nfes) * static_cast<double>(p.p_dec) +
          static_cast<double>(encoder_global_nfes) *
              (static_cast<double>(p.p_enc) + static_cast<double>(p.p_glob))) /
         1e9;
}

double memory_bandwidth_gb(const DecodeTrace& t, const ComponentParams& p) {
  return memory_bandwidth_gb(t.decoder_nfes, t.encoder_global_nfes, p);
}

double acceptance_rate(const DecodeTrace& t) {
  if (t.drafted_bytes == 0)
    throw std::runtime_error("acceptance_rate: no drafted bytes");
  return static_cast<double>(t.accepted_bytes) /
         static_cast<double>(t.drafted_bytes);
}

real sequence_logprob(const Engines& e, const ByteSeq& x) {
  if (x.empty() || x[0] != kBos)
    throw std::runtime_error("sequence_logprob: sequence must begin with BOS");
  const int n = static_cast<int>(x.size());
  if (n < 2) return 0;
  InferenceSession session(e.model, e.entropy, e.threshold, e.max_patch);
  session.set_sequence(x);
  session.encode_global();
  std::vector<real> logits = session.causal_logits_all();
  const int v = e.model.config.vocab;
  real sum = 0;
  for (int i = 1; i < n; ++i) {
    const real* row = logits.data() + static_cast<size_t>(i - 1) * v;
    sum += row[x[i]] - kernels::logsumexp_row(row, v);
  }
  return sum;
}

double type_token_ratio(const std::string& text) {
  auto is_space = [](unsigned char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r';
  };
  std::set<std::string> types;
  int64_t tokens = 0;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && is_space(text[i])) ++i;
    if (i >= text.size()) break;
    size_t j = i;
    while (j < text.size() && !is_space(text[j])) ++j;
    types.insert(text.substr(i, j - i));
    ++tokens;
    i = j;
  }
  if (tokens == 0) return 0;
  return static_cast<double>(types.size()) / static_cast<double>(tokens);
}

}  // namespace bltd
