#include <doctest.h>

#include "bltd/session.hpp"

using namespace bltd;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.d_local = 8;
  c.d_global = 16;
  c.n_layers_enc = 1;
  c.n_layers_glob = 2;
  c.n_layers_dec = 2;
  c.n_heads_enc = 2;
  c.n_heads_glob = 2;
  c.n_heads_dec = 2;
  c.ffn_hidden_local = 16;
  c.ffn_hidden_global = 32;
  return c;
}

struct Fixture {
  HierarchicalModel model;
  EntropyModel entropy;
  double threshold = 0.9;

  Fixture() {
    Rng rng(101);
    model = init_model(small_config(), rng);
    ByteSeq corpus;
    Rng crng(55);
    const std::string alphabet = "abcab abcab xyz";
    for (int i = 0; i < 2000; ++i)
      corpus.push_back(alphabet[crng.below(alphabet.size())]);
    entropy = fit_entropy_model({corpus}, 2, 0.1);
  }

  InferenceSession make(bool cache) {
    return InferenceSession(model, entropy, threshold, 8, cache);
  }
};

bool bits_equal(const std::vector<real>& a, const std::vector<real>& b) {
  if (a.size() != b.size()) return false;
  for (size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

ByteSeq text(const std::string& s) { return to_symbols(s, true); }

}  // namespace

TEST_CASE("cached and uncached causal forwards agree bit for bit") {
  Fixture f;
  for (const char* prompt : {"abcab abcab", "xyzzy", "a"}) {
    InferenceSession cached = f.make(true);
    InferenceSession plain = f.make(false);
    for (auto* s : {&cached, &plain}) {
      s->set_sequence(text(prompt));
      s->encode_global();
    }
    CHECK(bits_equal(cached.causal_logits_all(), plain.causal_logits_all()));
    CHECK(bits_equal(cached.causal_logits_last(), plain.causal_logits_last()));
  }
}

TEST_CASE("cached and uncached block forwards agree through an unmask loop") {
  Fixture f;
  InferenceSession cached = f.make(true);
  InferenceSession plain = f.make(false);
  for (auto* s : {&cached, &plain}) {
    s->set_sequence(text("abcab ab"));
    s->encode_global();
  }
  ByteSeq block(6, kMask);
  for (int step = 0; step < 4; ++step) {
    auto a = cached.block_logits(block);
    auto b = plain.block_logits(block);
    CHECK(bits_equal(a, b));
    block[step] = 'a' + step;  // progressively unmask
    block[5 - step] = 'z' - step;
  }
}

TEST_CASE("cached and uncached draft forwards agree as the draft grows") {
  Fixture f;
  InferenceSession cached = f.make(true);
  InferenceSession plain = f.make(false);
  for (auto* s : {&cached, &plain}) {
    s->set_sequence(text("abcabc"));
    s->encode_global();
  }
  ByteSeq draft;
  for (int j = 0; j < 6; ++j) {
    auto a = cached.draft_logits(draft);
    auto b = plain.draft_logits(draft);
    CHECK(bits_equal(a, b));
    draft.push_back('a' + j);
  }
}

TEST_CASE("incremental appends and re-encodes match a fresh session") {
  Fixture f;
  InferenceSession inc = f.make(true);
  inc.set_sequence(text("ab"));
  inc.encode_global();
  std::string tail = "cab abcab xy";
  for (size_t i = 0; i < tail.size(); ++i) {
    inc.append(static_cast<Symbol>(tail[i]));
    if (i % 3 == 2) inc.encode_global();
  }
  inc.encode_global();
  std::vector<real> got = inc.causal_logits_all();

  InferenceSession fresh = f.make(true);
  fresh.set_sequence(text("abcab abcab xy"));
  fresh.encode_global();
  CHECK(bits_equal(got, fresh.causal_logits_all()));

  InferenceSession plain = f.make(false);
  plain.set_sequence(text("abcab abcab xy"));
  plain.encode_global();
  CHECK(bits_equal(got, plain.causal_logits_all()));
}

TEST_CASE("replace_tail keeps shared prefixes and invalidates the rest") {
  Fixture f;
  InferenceSession s = f.make(true);
  s.set_sequence(text("abcab abc"));
  s.encode_global();
  (void)s.causal_logits_all();
  // rewrite from position 8; position 8 itself changes from 'a' to 'b'
  s.replace_tail(8, {'b', 'z', 'q', 'w'});
  s.encode_global();
  std::vector<real> got = s.causal_logits_all();

  InferenceSession fresh = f.make(true);
  fresh.set_sequence(text("abcab bzqw"));
  fresh.encode_global();
  CHECK(bits_equal(got, fresh.causal_logits_all()));
  CHECK(s.sequence() == fresh.sequence());
}

TEST_CASE("latent snapshot stays stale until encode_global is called") {
  Fixture f;
  InferenceSession a = f.make(true);
  InferenceSession b = f.make(false);
  for (auto* s : {&a, &b}) {
    s->set_sequence(text("abcab"));
    s->encode_global();
    // appended bytes extend the sequence but not the latent snapshot
    s->append('x');
    s->append('y');
  }
  CHECK(a.latent_count() == b.latent_count());
  CHECK(bits_equal(a.causal_logits_last(), b.causal_logits_last()));
}

TEST_CASE("cache audit: one committed block recomputes one latent") {
  Fixture f;
  // force pure max-size patching: BOS patch, then patches of exactly 8
  InferenceSession s(f.model, f.entropy, /*threshold=*/100.0, 8, true);
  ByteSeq prompt = text("abcdefgh");  // BOS + 8 bytes = patches [1][2..9]
  s.set_sequence(prompt);
  s.encode_global();
  int64_t before = s.latents_computed();
  // commit one aligned 8-byte block -> exactly one new patch
  for (int i = 0; i < 8; ++i) s.append('q');
  s.encode_global();
  CHECK(s.latents_computed() - before == 1);
  CHECK(s.latent_count() == 3);
}

TEST_CASE("decoder prefix cache: later causal steps reuse earlier rows") {
  Fixture f;
  InferenceSession s = f.make(true);
  s.set_sequence(text("abcab abc"));
  s.encode_global();
  (void)s.causal_logits_all();
  int64_t before = s.decoder_rows_computed();
  s.append('x');
  (void)s.causal_logits_last();
  // only rows invalidated by latent refreshes or the new byte are recomputed
  CHECK(s.decoder_rows_computed() - before <= 3);
}

TEST_CASE("component counters count invocations") {
  Fixture f;
  InferenceSession s = f.make(true);
  s.set_sequence(text("abc"));
  s.encode_global();
  s.encode_global();
  (void)s.causal_logits_all();
  (void)s.causal_logits_last();
  (void)s.block_logits(ByteSeq(4, kMask));
  (void)s.draft_logits({});
  CHECK(s.counters().encoder_global_calls == 2);
  CHECK(s.counters().decoder_calls == 4);
}

TEST_CASE("decoder forward requires latents") {
  Fixture f;
  InferenceSession s = f.make(true);
  s.set_sequence(text("abc"));
  CHECK_THROWS(s.causal_logits_all());
}
