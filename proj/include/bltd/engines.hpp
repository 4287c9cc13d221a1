#pragma once

#include <optional>
#include <string>
#include <vector>

#include "bltd/session.hpp"

namespace bltd {

// Per-generation record of work performed and bytes moved.
struct DecodeTrace {
  int64_t decoder_nfes = 0;
  int64_t encoder_global_nfes = 0;
  std::vector<int> unmask_steps;  // per block, number of decoder passes s
  int64_t drafted_bytes = 0;
  int64_t accepted_bytes = 0;
  ByteSeq output;  // prompt plus generated symbols, truncated at EOS / length
  int64_t generated = 0;  // symbols beyond the prompt in `output`
};

enum class UnmaskStrategy { kConfidence, kEntropyBounded, kOneStep };

struct UnmaskingConfig {
  UnmaskStrategy strategy = UnmaskStrategy::kConfidence;
  double alpha = 0.7;      // confidence threshold
  double gamma = 1.0;      // cumulative entropy bound, nats
  double top_p = 1.0;      // nucleus truncation for EB sampling
  double temperature = 0;  // 0 = greedy commit
};

struct EngineOptions {
  bool use_cache = true;
  uint64_t seed = 0;
};

// Greedy argmax with lowest-symbol tie break.
Symbol greedy_pick(const std::vector<real>& logits);

std::vector<real> softmax(const std::vector<real>& logits, double temperature);
// Keep the smallest probability prefix reaching top_p, renormalize the rest
// to zero. Ties broken toward lower symbol ids.
void nucleus_truncate(std::vector<real>& probs, double top_p);
double entropy_nats(const std::vector<real>& probs);

// Positions (0-based, into the given list) whose max probability exceeds
// alpha; falls back to the single highest-confidence position.
std::vector<int> select_unmask_confidence(
    const std::vector<std::vector<real>>& probs, double alpha);

// Longest ascending-entropy prefix with cumulative entropy <= gamma after
// optional top-p truncation; falls back to the single lowest-entropy
// position. Returns 0-based positions into the given list.
std::vector<int> select_unmask_eb(const std::vector<std::vector<real>>& probs,
                                  double gamma, double top_p);

// Prefix selection over precomputed entropies (ties toward lower index).
std::vector<int> select_entropy_prefix(const std::vector<double>& entropies,
                                       double gamma);

// Byte-exact verification (greedy): accept drafted bytes up to the first
// mismatch, replace the mismatch with the model's prediction, or append the
// free byte when everything matches. predictions[i] is the greedy next byte
// after position i+1 of the candidate.
ByteSeq verify_against_predictions(const ByteSeq& candidate, int l, int r,
                                   const std::vector<Symbol>& predictions,
                                   int* accepted_out);

struct Engines {
  const HierarchicalModel& model;
  const EntropyModel& entropy;
  double threshold;
  int max_patch;
};

// Standard autoregressive decoding: one decoder pass per byte, encoder and
// global model re-invoked whenever the patcher declares a patch boundary.
DecodeTrace generate_ar(const Engines& e, const ByteSeq& prompt, int length,
                        const EngineOptions& opts = {});

// Block diffusion decoding (verification optional).
DecodeTrace generate_blt_d(const Engines& e, const ByteSeq& prompt, int length,
                           int block_size, const UnmaskingConfig& cfg,
                           const EngineOptions& opts = {});

// Self-speculation: draft up to window bytes with the decoder, verify with a
// full forward pass. Greedy only; output matches generate_ar exactly.
DecodeTrace generate_blt_s(const Engines& e, const ByteSeq& prompt, int length,
                           int window, const EngineOptions& opts = {});

// Diffusion drafting plus byte-exact verification. Greedy verification;
// output matches generate_ar exactly.
DecodeTrace generate_blt_dv(const Engines& e, const ByteSeq& prompt,
                            int length, int block_size,
                            const UnmaskingConfig& cfg,
                            const EngineOptions& opts = {});

// Teacher-forced replay of generate_ar's scoring path: per-position
// log p(x_{i+1} | x_{<=i}) for i = 1..N-1, computed stepwise.
std::vector<real> stepwise_logprobs(const Engines& e, const ByteSeq& x,
                                    bool use_cache = true);

// Line-delimited JSON record for one generation.
std::string trace_to_json(const DecodeTrace& t, const std::string& engine,
                          std::optional<int> block, std::optional<int> window,
                          const std::optional<UnmaskingConfig>& cfg,
                          uint64_t seed);

}  // namespace bltd
