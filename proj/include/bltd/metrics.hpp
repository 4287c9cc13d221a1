#pragma once

#include <string>

#include "bltd/engines.hpp"

namespace bltd {

struct ComponentParams {
  int64_t p_dec = 0;
  int64_t p_enc = 0;
  int64_t p_glob = 0;
  int bytes_per_param = 2;  // 16-bit parameters by default

  static ComponentParams from_model(const HierarchicalModel& m,
                                    int bytes_per_param = 2);
};

// Estimated parameter-load traffic in gigabytes:
//   b * (N_dec * P_dec + N_enc * (P_enc + P_glob)) / 1e9
double memory_bandwidth_gb(int64_t decoder_nfes, int64_t encoder_global_nfes,
                           const ComponentParams& p);
double memory_bandwidth_gb(const DecodeTrace& t, const ComponentParams& p);

// Fraction of drafted bytes accepted by verification; free bytes are not
// drafted bytes.
double acceptance_rate(const DecodeTrace& t);

// Sum over positions >= 2 of log p(x_i | x_<i) under the causal decoder
// configuration.
real sequence_logprob(const Engines& e, const ByteSeq& x);

// Unique whitespace-delimited words over total words, on raw bytes; empty or
// whitespace-only text scores 0.
double type_token_ratio(const std::string& text);

}  // namespace bltd
