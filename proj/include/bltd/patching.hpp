#pragma once

#include <map>
#include <unordered_map>
#include <vector>

#include "bltd/common.hpp"

namespace bltd {

// Variable-length patch boundaries over a byte sequence. Starts are 1-based
// and strictly increasing with starts[0] == 1; patches tile [1, N] exactly.
// `last_patch_closed` records whether the patcher would start a new patch at
// position N+1 (decidable from the first N symbols), which is what makes the
// final byte of the sequence count as patch-final.
struct PatchSegmentation {
  std::vector<int> starts;
  int sequence_length = 0;
  bool last_patch_closed = false;
  // Why each patch started: 0 first patch, 1 forced after the BOS patch,
  // 2 entropy threshold, 3 max patch size.
  std::vector<uint8_t> triggers;

  int patch_count() const { return static_cast<int>(starts.size()); }
  int patch_end(int j) const {  // 1-based patch index -> last position
    return j < patch_count() ? starts[j] - 1 : sequence_length;
  }
  int patch_of(int pos) const;  // 1-based position -> 1-based patch index
};

enum PatchTrigger : uint8_t {
  kTriggerFirst = 0,
  kTriggerBosRule = 1,
  kTriggerEntropy = 2,
  kTriggerMaxSize = 3,
};

// Add-lambda smoothed order-k byte model over the 260-symbol vocabulary.
// Contexts never seen in the corpus back off to the smoothed unigram.
struct EntropyModel {
  int order = 2;
  double smoothing = 0.1;
  // context key -> (symbol -> count), symbols kept ordered so entropy sums
  // are evaluated in a fixed order
  std::unordered_map<uint64_t, std::map<Symbol, int64_t>> contexts;
  std::unordered_map<uint64_t, int64_t> context_totals;
  std::vector<int64_t> unigram = std::vector<int64_t>(kVocabSize, 0);
  int64_t unigram_total = 0;

  static uint64_t pack_context(const Symbol* ctx, int order);

  // Distribution over the full vocabulary given the last `order` symbols of
  // the prefix (BOS-padded on the left when the prefix is shorter).
  std::vector<double> next_distribution(const ByteSeq& prefix) const;
  double prob(const ByteSeq& prefix, Symbol next) const;

  // Shannon entropy (nats) of the next-symbol distribution.
  double next_entropy(const ByteSeq& prefix) const;
};

EntropyModel fit_entropy_model(const std::vector<ByteSeq>& corpus, int order,
                               double smoothing);

double next_byte_entropy(const EntropyModel& model, const ByteSeq& prefix);

// Streaming patcher. A boundary for position n+1 is decided from the first n
// symbols only, so prefixes of a sequence always segment to a prefix of the
// full segmentation.
class IncrementalPatcher {
 public:
  IncrementalPatcher(const EntropyModel* model, double threshold,
                     int max_patch);

  void reset();
  void push(Symbol s);
  void truncate_to(int n);

  int size() const { return static_cast<int>(seq_.size()); }
  const ByteSeq& sequence() const { return seq_; }
  // Would position size()+1 start a new patch?
  bool boundary_next() const { return pending_boundary_; }
  PatchSegmentation segmentation() const;

 private:
  void recompute_pending();

  const EntropyModel* model_;
  double threshold_;
  int max_patch_;
  ByteSeq seq_;
  std::vector<int> starts_;
  std::vector<uint8_t> triggers_;
  bool pending_boundary_ = false;
  uint8_t pending_trigger_ = kTriggerEntropy;
};

PatchSegmentation segment(const ByteSeq& x, const EntropyModel& model,
                          double threshold, int max_patch);

// Bisection on the entropy threshold until the mean patch length over the
// calibration sample is within 5% of target_avg; returns the best threshold
// found either way (a warning is printed to stderr if the target was not
// reached).
double calibrate_threshold(const std::vector<ByteSeq>& corpus,
                           const EntropyModel& model, double target_avg,
                           int max_patch);

double mean_patch_length(const std::vector<ByteSeq>& corpus,
                         const EntropyModel& model, double threshold,
                         int max_patch);

}  // namespace bltd
