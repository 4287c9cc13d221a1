#include "bltd/engines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "bltd/kernels.hpp"

namespace bltd {

Symbol greedy_pick(const std::vector<real>& logits) {
  Symbol best = 0;
  for (size_t i = 1; i < logits.size(); ++i)
    if (logits[i] > logits[best]) best = static_cast<Symbol>(i);
  return best;
}

std::vector<real> softmax(const std::vector<real>& logits, double temperature) {
  std::vector<real> p(logits.size());
  const real t = temperature > 0 ? static_cast<real>(temperature) : real(1);
  real mx = logits[0] / t;
  for (size_t i = 0; i < logits.size(); ++i) {
    p[i] = logits[i] / t;
    if (p[i] > mx) mx = p[i];
  }
  real sum = 0;
  for (real& x : p) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (real& x : p) x /= sum;
  return p;
}

void nucleus_truncate(std::vector<real>& probs, double top_p) {
  if (!(top_p > 0) || top_p > 1)
    throw std::runtime_error("nucleus_truncate: top_p must lie in (0,1]");
  if (top_p == 1.0) return;
  std::vector<int> order(probs.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (probs[a] != probs[b]) return probs[a] > probs[b];
    return a < b;
  });
  real cum = 0;
  size_t keep = 0;
  while (keep < order.size()) {
    cum += probs[order[keep]];
    ++keep;
    if (cum >= static_cast<real>(top_p)) break;
  }
  std::vector<uint8_t> kept(probs.size(), 0);
  real mass = 0;
  for (size_t i = 0; i < keep; ++i) {
    kept[order[i]] = 1;
    mass += probs[order[i]];
  }
  for (size_t i = 0; i < probs.size(); ++i)
    probs[i] = kept[i] ? probs[i] / mass : real(0);
}

double entropy_nats(const std::vector<real>& probs) {
  double h = 0;
  for (real p : probs)
    if (p > 0) h -= static_cast<double>(p) * std::log(static_cast<double>(p));
  return h;
}

std::vector<int> select_unmask_confidence(
    const std::vector<std::vector<real>>& probs, double alpha) {
  if (probs.empty())
    throw std::runtime_error("select_unmask_confidence: no masked positions");
  std::vector<int> out;
  int best = 0;
  real best_conf = 0;
  for (size_t i = 0; i < probs.size(); ++i) {
    real conf = *std::max_element(probs[i].begin(), probs[i].end());
    if (conf > static_cast<real>(alpha)) out.push_back(static_cast<int>(i));
    if (conf > best_conf) {
      best_conf = conf;
      best = static_cast<int>(i);
    }
  }
  if (out.empty()) out.push_back(best);  // progress guarantee
  return out;
}

std::vector<int> select_entropy_prefix(const std::vector<double>& entropies,
                                       double gamma) {
  std::vector<int> order(entropies.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (entropies[a] != entropies[b]) return entropies[a] < entropies[b];
    return a < b;
  });
  std::vector<int> out;
  double cum = 0;
  for (int idx : order) {
    if (cum + entropies[idx] > gamma) break;
    cum += entropies[idx];
    out.push_back(idx);
  }
  if (out.empty()) out.push_back(order[0]);  // progress guarantee
  return out;
}

std::vector<int> select_unmask_eb(const std::vector<std::vector<real>>& probs,
                                  double gamma, double top_p) {
  if (probs.empty())
    throw std::runtime_error("select_unmask_eb: no masked positions");
  std::vector<double> entropies(probs.size());
  for (size_t i = 0; i < probs.size(); ++i) {
    std::vector<real> p = probs[i];
    nucleus_truncate(p, top_p);
    entropies[i] = entropy_nats(p);
  }
  return select_entropy_prefix(entropies, gamma);
}

ByteSeq verify_against_predictions(const ByteSeq& candidate, int l, int r,
                                   const std::vector<Symbol>& predictions,
                                   int* accepted_out) {
  if (r < 1) throw std::runtime_error("verify: draft length must be >= 1");
  if (static_cast<int>(candidate.size()) != l + r)
    throw std::runtime_error("verify: candidate length mismatch");
  if (static_cast<int>(predictions.size()) < l + r)
    throw std::runtime_error("verify: predictions missing");
  ByteSeq x(candidate.begin(), candidate.begin() + l);
  int accepted = 0;
  int i = l + 1;
  for (; i <= l + r; ++i) {
    Symbol y_prev = predictions[i - 1];  // greedy next byte after i-1
    if (candidate[i - 1] != y_prev) {
      x.push_back(y_prev);  // reject drafted byte, take the model's
      break;
    }
    x.push_back(candidate[i - 1]);
    ++accepted;
  }
  if (i == l + r + 1) x.push_back(predictions[l + r]);  // free byte
  if (accepted_out) *accepted_out = accepted;
  return x;
}

namespace {

// Cut everything after the first EOS at or beyond the prompt and cap the
// generated length, so every engine reports identical output for identical
// byte decisions.
void finalize_trace(DecodeTrace& trace, const ByteSeq& full, int prompt_len,
                    int length) {
  ByteSeq out(full.begin(), full.begin() + prompt_len);
  int taken = 0;
  for (size_t i = prompt_len; i < full.size() && taken < length; ++i) {
    out.push_back(full[i]);
    ++taken;
    if (full[i] == kEos) break;
  }
  trace.output = std::move(out);
  trace.generated = taken;
}

void check_prompt(const ByteSeq& prompt) {
  if (prompt.empty() || prompt[0] != kBos)
    throw std::runtime_error("generation: prompt must begin with BOS");
}

struct ArResult {
  DecodeTrace trace;
  std::vector<real> logprobs;
};

// Shared driver for autoregressive decoding and teacher-forced scoring.
ArResult ar_loop(const Engines& e, const ByteSeq& prompt, int length,
                 const ByteSeq* forced, const EngineOptions& opts) {
  check_prompt(prompt);
  ArResult res;
  InferenceSession s(e.model, e.entropy, e.threshold, e.max_patch,
                     opts.use_cache);
  s.set_sequence(prompt);
  s.encode_global();
  res.trace.encoder_global_nfes = 1;
  const int v = e.model.config.vocab;
  for (int gen = 0; gen < length; ++gen) {
    if (s.boundary_next()) {
      // The patcher has declared a patch boundary at the next position; the
      // final patch is complete, so refresh the latents before decoding.
      s.encode_global();
      res.trace.encoder_global_nfes += 1;
    }
    std::vector<real> logits = s.causal_logits_last();
    res.trace.decoder_nfes += 1;
    Symbol b;
    if (forced) {
      b = (*forced)[gen];
      res.logprobs.push_back(logits[b] -
                             kernels::logsumexp_row(logits.data(), v));
    } else {
      b = greedy_pick(logits);
    }
    s.append(b);
    if (!forced && b == kEos) break;
  }
  finalize_trace(res.trace, s.sequence(), static_cast<int>(prompt.size()),
                 length);
  if (res.trace.decoder_nfes != s.counters().decoder_calls ||
      res.trace.encoder_global_nfes != s.counters().encoder_global_calls)
    throw std::runtime_error("ar_loop: trace counters out of sync");
  return res;
}

// One diffusion block: iteratively unmask B positions, mutating `block`.
// Returns the number of decoder passes used.
int diffuse_block(InferenceSession& s, int block_size,
                  const UnmaskingConfig& cfg, Rng& rng, DecodeTrace& trace,
                  ByteSeq& block) {
  block.assign(block_size, kMask);
  std::vector<uint8_t> masked(block_size, 1);
  int remaining = block_size;
  int steps = 0;
  const bool sampled = cfg.strategy == UnmaskStrategy::kEntropyBounded &&
                       cfg.temperature > 0;
  while (remaining > 0) {
    std::vector<real> logits = s.block_logits(block);
    trace.decoder_nfes += 1;
    ++steps;
    const int v = static_cast<int>(logits.size()) / block_size;
    std::vector<int> masked_pos;
    for (int i = 0; i < block_size; ++i)
      if (masked[i]) masked_pos.push_back(i);

    std::vector<int> chosen;  // indices into masked_pos
    std::vector<std::vector<real>> probs;
    switch (cfg.strategy) {
      case UnmaskStrategy::kOneStep: {
        chosen.resize(masked_pos.size());
        std::iota(chosen.begin(), chosen.end(), 0);
        break;
      }
      case UnmaskStrategy::kConfidence: {
        probs.reserve(masked_pos.size());
        for (int i : masked_pos) {
          std::vector<real> row(logits.begin() + static_cast<size_t>(i) * v,
                                logits.begin() + static_cast<size_t>(i + 1) * v);
          probs.push_back(softmax(row, 0));
        }
        chosen = select_unmask_confidence(probs, cfg.alpha);
        break;
      }
      case UnmaskStrategy::kEntropyBounded: {
        probs.reserve(masked_pos.size());
        for (int i : masked_pos) {
          std::vector<real> row(logits.begin() + static_cast<size_t>(i) * v,
                                logits.begin() + static_cast<size_t>(i + 1) * v);
          std::vector<real> p = softmax(row, cfg.temperature);
          nucleus_truncate(p, cfg.top_p);
          probs.push_back(std::move(p));
        }
        std::vector<double> entropies(probs.size());
        for (size_t i = 0; i < probs.size(); ++i)
          entropies[i] = entropy_nats(probs[i]);
        chosen = select_entropy_prefix(entropies, cfg.gamma);
        break;
      }
    }

    for (int c : chosen) {
      const int pos = masked_pos[c];
      Symbol value;
      if (sampled) {
        const std::vector<real>& p = probs[c];
        double u = rng.u01();
        double cum = 0;
        value = static_cast<Symbol>(p.size() - 1);
        for (size_t j = 0; j < p.size(); ++j) {
          cum += p[j];
          if (u < cum) {
            value = static_cast<Symbol>(j);
            break;
          }
        }
      } else {
        std::vector<real> row(logits.begin() + static_cast<size_t>(pos) * v,
                              logits.begin() + static_cast<size_t>(pos + 1) * v);
        value = greedy_pick(row);
      }
      block[pos] = value;
      masked[pos] = 0;
      --remaining;
    }
  }
  trace.unmask_steps.push_back(steps);
  return steps;
}

bool contains_eos(const ByteSeq& s, size_t from) {
  for (size_t i = from; i < s.size(); ++i)
    if (s[i] == kEos) return true;
  return false;
}

// Full verification pass per the shared draft-then-verify procedure: one
// encoder/global refresh over the candidate, one causal decoder pass, then
// byte-exact acceptance up to the first mismatch (or the free byte).
void verify_step(InferenceSession& s, DecodeTrace& trace, int l, int r) {
  s.encode_global();
  trace.encoder_global_nfes += 1;
  std::vector<real> logits = s.causal_logits_all();
  trace.decoder_nfes += 1;
  const int v = static_cast<int>(logits.size()) / s.size();
  std::vector<Symbol> preds(s.size() + 1, 0);
  for (int pos = 1; pos <= s.size(); ++pos) {
    std::vector<real> row(logits.begin() + static_cast<size_t>(pos - 1) * v,
                          logits.begin() + static_cast<size_t>(pos) * v);
    preds[pos] = greedy_pick(row);
  }
  int accepted = 0;
  ByteSeq verified =
      verify_against_predictions(s.sequence(), l, r, preds, &accepted);
  trace.drafted_bytes += r;
  trace.accepted_bytes += accepted;
  s.replace_tail(l + 1, ByteSeq(verified.begin() + l, verified.end()));
}

}  // namespace

DecodeTrace generate_ar(const Engines& e, const ByteSeq& prompt, int length,
                        const EngineOptions& opts) {
  return ar_loop(e, prompt, length, nullptr, opts).trace;
}

std::vector<real> stepwise_logprobs(const Engines& e, const ByteSeq& x,
                                    bool use_cache) {
  if (x.size() < 2) return {};
  ByteSeq prompt(x.begin(), x.begin() + 1);
  ByteSeq forced(x.begin() + 1, x.end());
  EngineOptions opts;
  opts.use_cache = use_cache;
  return ar_loop(e, prompt, static_cast<int>(forced.size()), &forced, opts)
      .logprobs;
}

DecodeTrace generate_blt_d(const Engines& e, const ByteSeq& prompt, int length,
                           int block_size, const UnmaskingConfig& cfg,
                           const EngineOptions& opts) {
  check_prompt(prompt);
  if (block_size < 1)
    throw std::runtime_error("generate_blt_d: block size must be >= 1");
  DecodeTrace trace;
  InferenceSession s(e.model, e.entropy, e.threshold, e.max_patch,
                     opts.use_cache);
  Rng rng(opts.seed);
  s.set_sequence(prompt);
  s.encode_global();
  trace.encoder_global_nfes = 1;
  const int prompt_len = static_cast<int>(prompt.size());
  ByteSeq block;
  while (s.size() - prompt_len < length &&
         !contains_eos(s.sequence(), prompt_len)) {
    diffuse_block(s, block_size, cfg, rng, trace, block);
    for (Symbol b : block) s.append(b);
    s.encode_global();  // latents for the next block
    trace.encoder_global_nfes += 1;
  }
  finalize_trace(trace, s.sequence(), prompt_len, length);
  if (trace.decoder_nfes != s.counters().decoder_calls ||
      trace.encoder_global_nfes != s.counters().encoder_global_calls)
    throw std::runtime_error("generate_blt_d: trace counters out of sync");
  return trace;
}

DecodeTrace generate_blt_s(const Engines& e, const ByteSeq& prompt, int length,
                           int window, const EngineOptions& opts) {
  check_prompt(prompt);
  if (window < 1) throw std::runtime_error("generate_blt_s: window must be >= 1");
  DecodeTrace trace;
  InferenceSession s(e.model, e.entropy, e.threshold, e.max_patch,
                     opts.use_cache);
  s.set_sequence(prompt);
  s.encode_global();
  trace.encoder_global_nfes = 1;
  const int prompt_len = static_cast<int>(prompt.size());
  while (s.size() - prompt_len < length &&
         !contains_eos(s.sequence(), prompt_len)) {
    const int l = s.size();
    // Draft window bytes with the decoder only, ignoring patch boundaries.
    ByteSeq draft;
    for (int j = 0; j < window; ++j) {
      std::vector<real> logits = s.draft_logits(draft);
      trace.decoder_nfes += 1;
      draft.push_back(greedy_pick(logits));
    }
    s.replace_tail(l + 1, draft);
    verify_step(s, trace, l, window);
  }
  finalize_trace(trace, s.sequence(), prompt_len, length);
  if (trace.decoder_nfes != s.counters().decoder_calls ||
      trace.encoder_global_nfes != s.counters().encoder_global_calls)
    throw std::runtime_error("generate_blt_s: trace counters out of sync");
  return trace;
}

DecodeTrace generate_blt_dv(const Engines& e, const ByteSeq& prompt,
                            int length, int block_size,
                            const UnmaskingConfig& cfg,
                            const EngineOptions& opts) {
  check_prompt(prompt);
  if (block_size < 1)
    throw std::runtime_error("generate_blt_dv: block size must be >= 1");
  DecodeTrace trace;
  InferenceSession s(e.model, e.entropy, e.threshold, e.max_patch,
                     opts.use_cache);
  Rng rng(opts.seed);
  s.set_sequence(prompt);
  s.encode_global();
  trace.encoder_global_nfes = 1;
  const int prompt_len = static_cast<int>(prompt.size());
  ByteSeq block;
  while (s.size() - prompt_len < length &&
         !contains_eos(s.sequence(), prompt_len)) {
    const int l = s.size();
    // Diffusion drafts the block against the latest latent snapshot; the
    // verification pass re-encodes, so no extra refresh is needed here.
    diffuse_block(s, block_size, cfg, rng, trace, block);
    s.replace_tail(l + 1, block);
    verify_step(s, trace, l, block_size);
  }
  finalize_trace(trace, s.sequence(), prompt_len, length);
  if (trace.decoder_nfes != s.counters().decoder_calls ||
      trace.encoder_global_nfes != s.counters().encoder_global_calls)
    throw std::runtime_error("generate_blt_dv: trace counters out of sync");
  return trace;
}

std::string trace_to_json(const DecodeTrace& t, const std::string& engine,
                          std::optional<int> block, std::optional<int> window,
                          const std::optional<UnmaskingConfig>& cfg,
                          uint64_t seed) {
  nlohmann::json j;
  j["engine"] = engine;
  j["B"] = block ? nlohmann::json(*block) : nlohmann::json(nullptr);
  j["k"] = window ? nlohmann::json(*window) : nlohmann::json(nullptr);
  if (cfg) {
    switch (cfg->strategy) {
      case UnmaskStrategy::kConfidence: j["strategy"] = "confidence"; break;
      case UnmaskStrategy::kEntropyBounded: j["strategy"] = "eb"; break;
      case UnmaskStrategy::kOneStep: j["strategy"] = "one-step"; break;
    }
    j["alpha"] = cfg->alpha;
    j["gamma"] = cfg->gamma;
    j["top_p"] = cfg->top_p;
  } else {
    j["strategy"] = nullptr;
    j["alpha"] = nullptr;
    j["gamma"] = nullptr;
    j["top_p"] = nullptr;
  }
  j["decoder_nfes"] = t.decoder_nfes;
  j["encoder_global_nfes"] = t.encoder_global_nfes;
  j["drafted"] = t.drafted_bytes;
  j["accepted"] = t.accepted_bytes;
  j["output_len"] = t.generated;
  j["seed"] = seed;
  return j.dump();
}

}  // namespace bltd
