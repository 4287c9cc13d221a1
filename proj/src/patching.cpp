#include "bltd/patching.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

namespace bltd {

int PatchSegmentation::patch_of(int pos) const {
  if (pos < 1 || pos > sequence_length)
    throw std::runtime_error("patch_of: position out of range");
  auto it = std::upper_bound(starts.begin(), starts.end(), pos);
  return static_cast<int>(it - starts.begin());
}

uint64_t EntropyModel::pack_context(const Symbol* ctx, int order) {
  uint64_t key = 1;  // leading 1 keeps different orders distinct
  for (int i = 0; i < order; ++i) key = (key << 9) | static_cast<uint64_t>(ctx[i]);
  return key;
}

namespace {

uint64_t context_key_for(const EntropyModel& m, const ByteSeq& prefix) {
  Symbol ctx[8];
  const int n = static_cast<int>(prefix.size());
  for (int i = 0; i < m.order; ++i) {
    int src = n - m.order + i;
    ctx[i] = src >= 0 ? prefix[src] : kBos;
  }
  return EntropyModel::pack_context(ctx, m.order);
}

}  // namespace

std::vector<double> EntropyModel::next_distribution(const ByteSeq& prefix) const {
  std::vector<double> p(kVocabSize);
  const double lam = smoothing;
  if (order > 0) {
    uint64_t key = context_key_for(*this, prefix);
    auto it = contexts.find(key);
    if (it != contexts.end()) {
      int64_t total = context_totals.at(key);
      double denom = static_cast<double>(total) + lam * kVocabSize;
      double p0 = lam / denom;
      std::fill(p.begin(), p.end(), p0);
      for (auto& [sym, cnt] : it->second)
        p[sym] = (static_cast<double>(cnt) + lam) / denom;
      return p;
    }
  }
  double denom = static_cast<double>(unigram_total) + lam * kVocabSize;
  for (Symbol s = 0; s < kVocabSize; ++s)
    p[s] = (static_cast<double>(unigram[s]) + lam) / denom;
  return p;
}

double EntropyModel::prob(const ByteSeq& prefix, Symbol next) const {
  return next_distribution(prefix)[next];
}

double EntropyModel::next_entropy(const ByteSeq& prefix) const {
  const double lam = smoothing;
  if (order > 0) {
    uint64_t key = context_key_for(*this, prefix);
    auto it = contexts.find(key);
    if (it != contexts.end()) {
      int64_t total = context_totals.at(key);
      double denom = static_cast<double>(total) + lam * kVocabSize;
      double h = 0;
      int present = 0;
      for (auto& [sym, cnt] : it->second) {
        double p = (static_cast<double>(cnt) + lam) / denom;
        if (p > 0) h -= p * std::log(p);
        ++present;
      }
      double p0 = lam / denom;
      if (p0 > 0) h -= (kVocabSize - present) * p0 * std::log(p0);
      return h;
    }
  }
  double denom = static_cast<double>(unigram_total) + lam * kVocabSize;
  double h = 0;
  for (Symbol s = 0; s < kVocabSize; ++s) {
    double p = (static_cast<double>(unigram[s]) + lam) / denom;
    if (p > 0) h -= p * std::log(p);
  }
  return h;
}

EntropyModel fit_entropy_model(const std::vector<ByteSeq>& corpus, int order,
                               double smoothing) {
  if (order < 0) throw std::runtime_error("fit_entropy_model: order must be >= 0");
  if (order > 6) throw std::runtime_error("fit_entropy_model: order too large");
  if (smoothing <= 0)
    throw std::runtime_error("fit_entropy_model: smoothing must be > 0");
  size_t total = 0;
  for (const auto& doc : corpus) total += doc.size();
  if (total == 0) throw std::runtime_error("fit_entropy_model: empty corpus");

  EntropyModel m;
  m.order = order;
  m.smoothing = smoothing;
  Symbol ctx[8];
  for (const auto& doc : corpus) {
    const int n = static_cast<int>(doc.size());
    for (int i = 0; i < n; ++i) {
      Symbol s = doc[i];
      if (s < 0 || s >= kVocabSize)
        throw std::runtime_error("fit_entropy_model: symbol out of range");
      m.unigram[s] += 1;
      m.unigram_total += 1;
      if (order > 0) {
        for (int j = 0; j < order; ++j) {
          int src = i - order + j;
          ctx[j] = src >= 0 ? doc[src] : kBos;
        }
        uint64_t key = EntropyModel::pack_context(ctx, order);
        m.contexts[key][s] += 1;
        m.context_totals[key] += 1;
      }
    }
  }
  return m;
}

double next_byte_entropy(const EntropyModel& model, const ByteSeq& prefix) {
  return model.next_entropy(prefix);
}

IncrementalPatcher::IncrementalPatcher(const EntropyModel* model,
                                       double threshold, int max_patch)
    : model_(model), threshold_(threshold), max_patch_(max_patch) {
  if (max_patch < 1)
    throw std::runtime_error("IncrementalPatcher: max_patch must be >= 1");
}

void IncrementalPatcher::reset() {
  seq_.clear();
  starts_.clear();
  triggers_.clear();
  pending_boundary_ = false;
}

void IncrementalPatcher::recompute_pending() {
  const int n = size();
  if (n == 0) {
    pending_boundary_ = false;
    return;
  }
  double h = model_->next_entropy(seq_);
  bool ent = h > threshold_;
  bool maxed = (n + 1) - starts_.back() >= max_patch_;
  if (n == 1) {
    // The BOS patch covers exactly one byte, so position 2 always starts
    // patch 2 whatever the entropy says.
    pending_boundary_ = true;
    pending_trigger_ = ent ? kTriggerEntropy : kTriggerBosRule;
    return;
  }
  pending_boundary_ = ent || maxed;
  pending_trigger_ = ent ? kTriggerEntropy : kTriggerMaxSize;
}

void IncrementalPatcher::push(Symbol s) {
  const int pos = size() + 1;
  if (pos == 1) {
    starts_.push_back(1);
    triggers_.push_back(kTriggerFirst);
  } else if (pending_boundary_) {
    starts_.push_back(pos);
    triggers_.push_back(pending_trigger_);
  }
  seq_.push_back(s);
  recompute_pending();
}

void IncrementalPatcher::truncate_to(int n) {
  if (n < 0 || n > size()) throw std::runtime_error("truncate_to: bad length");
  seq_.resize(n);
  while (!starts_.empty() && starts_.back() > n) {
    starts_.pop_back();
    triggers_.pop_back();
  }
  recompute_pending();
}

PatchSegmentation IncrementalPatcher::segmentation() const {
  PatchSegmentation seg;
  seg.starts = starts_;
  seg.triggers = triggers_;
  seg.sequence_length = size();
  seg.last_patch_closed = pending_boundary_;
  return seg;
}

PatchSegmentation segment(const ByteSeq& x, const EntropyModel& model,
                          double threshold, int max_patch) {
  if (x.empty() || x[0] != kBos)
    throw std::runtime_error("segment: sequence must begin with BOS");
  IncrementalPatcher p(&model, threshold, max_patch);
  for (Symbol s : x) p.push(s);
  return p.segmentation();
}

double mean_patch_length(const std::vector<ByteSeq>& corpus,
                         const EntropyModel& model, double threshold,
                         int max_patch) {
  int64_t bytes = 0, patches = 0;
  for (const auto& doc : corpus) {
    ByteSeq x;
    x.reserve(doc.size() + 1);
    x.push_back(kBos);
    for (Symbol s : doc) x.push_back(s);
    PatchSegmentation seg = segment(x, model, threshold, max_patch);
    bytes += seg.sequence_length;
    patches += seg.patch_count();
  }
  if (patches == 0) throw std::runtime_error("mean_patch_length: empty corpus");
  return static_cast<double>(bytes) / static_cast<double>(patches);
}

double calibrate_threshold(const std::vector<ByteSeq>& corpus,
                           const EntropyModel& model, double target_avg,
                           int max_patch) {
  if (corpus.empty()) throw std::runtime_error("calibrate_threshold: empty corpus");
  if (!(target_avg > 1.0) || target_avg > max_patch)
    throw std::runtime_error("calibrate_threshold: target_avg must be in (1, max_patch]");
  double lo = 0.0;
  double hi = std::log(static_cast<double>(kVocabSize)) + 1.0;
  double best = hi, best_err = 1e300;
  for (int iter = 0; iter < 50; ++iter) {
    double mid = 0.5 * (lo + hi);
    double avg = mean_patch_length(corpus, model, mid, max_patch);
    double err = std::fabs(avg - target_avg);
    if (err < best_err) {
      best_err = err;
      best = mid;
    }
    if (err <= 0.05 * target_avg) return mid;
    if (avg < target_avg)
      lo = mid;  // raise threshold -> fewer boundaries -> longer patches
    else
      hi = mid;
  }
  std::fprintf(stderr,
               "calibrate_threshold: target avg %.3f not reached within 5%% "
               "(best threshold %.6f, off by %.3f)\n",
               target_avg, best, best_err);
  return best;
}

}  // namespace bltd
