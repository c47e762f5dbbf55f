#include <cmath>

#include "doctest.h"
#include "extsum/model.hpp"
#include "support.hpp"

using namespace extsum;
using extsum::testing::layout_document;
using extsum::testing::random_inputs;

namespace {

std::vector<Real> to_vec(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

std::vector<Real> minus(const Tensor& a, const Tensor& b) {
  std::vector<Real> out(a.size());
  for (std::size_t k = 0; k < a.size(); ++k) out[k] = a[k] - b[k];
  return out;
}

std::vector<Real> join(std::vector<Real> a, const std::vector<Real>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

ModelConfig small_config(DecoderKind decoder, std::size_t d_emb = 5, std::size_t d_hid = 3) {
  ModelConfig cfg;
  cfg.d_emb = d_emb;
  cfg.d_hid = d_hid;
  cfg.d_mlp = 6;
  cfg.decoder = decoder;
  cfg.dropout = 0.0;
  return cfg;
}

// Random parameters with non-zero biases.
ModelParams random_params(const ModelConfig& cfg, std::uint64_t seed) {
  Rng rng(seed);
  auto p = ModelParams::init(cfg, rng);
  for (auto& [name, t] : p.named()) {
    if (name.find(".b") == std::string::npos) continue;
    Tensor h = t;
    for (auto& v : h.values()) v = static_cast<Real>(rng.uniform(-0.5, 0.5));
  }
  return p;
}

}  // namespace

TEST_CASE("encode_sentence averages embedding rows") {
  const Vocabulary vocab({"<unk>", "a", "b"});
  EmbeddingTable table;
  table.rows = 3;
  table.dim = 2;
  table.values = {0, 0, 1, 0, 0, 1};
  auto sentence = [](std::vector<std::string> toks) {
    Sentence s;
    s.tokens = std::move(toks);
    s.word_count = s.tokens.size();
    return s;
  };
  CHECK(to_vec(encode_sentence(sentence({"a", "b"}), vocab, table)) == std::vector<Real>{0.5, 0.5});
  CHECK(to_vec(encode_sentence(sentence({"x", "y"}), vocab, table)) == std::vector<Real>{0, 0});
  CHECK(to_vec(encode_sentence(sentence({"b"}), vocab, table)) == std::vector<Real>{0, 1});
  CHECK(to_vec(encode_sentence(sentence({}), vocab, table)) == std::vector<Real>{0, 0});
  // UNK rows count in the denominator
  CHECK(to_vec(encode_sentence(sentence({"a", "zzz"}), vocab, table)) == std::vector<Real>{0.5, 0});
}

TEST_CASE("a single section spanning the document equals the document view") {
  const auto cfg = small_config(DecoderKind::kConcat);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto doc = layout_document({3 + seed});
    const auto params = random_params(cfg, seed);
    const auto enc = encode_document(doc, random_inputs(doc.sentences.size(), cfg.d_emb, seed + 100), params);
    REQUIRE(enc.segments.size() == 1);
    CHECK(to_vec(enc.segments[0]) == to_vec(enc.document));
  }
}

TEST_CASE("segment representations on the eight-sentence, three-section layout") {
  const auto cfg = small_config(DecoderKind::kConcat);
  const auto params = random_params(cfg, 42);
  const auto inputs = random_inputs(8, cfg.d_emb, 43);
  const Tensor zero = Tensor::zeros({cfg.d_hid});

  // sections of 2, 3 and 3 sentences: the second covers sentences 3..5 (1-based),
  // so its representation is [f5 - f2, b3 - b6]
  {
    const auto enc = encode_document(layout_document({2, 3, 3}), inputs, params);
    const auto& f = enc.states.forward;
    const auto& b = enc.states.backward;
    CHECK(to_vec(enc.segments[1]) == join(minus(f[4], f[1]), minus(b[2], b[5])));
    CHECK(to_vec(enc.segments[0]) == join(minus(f[1], zero), minus(b[0], b[2])));
    CHECK(to_vec(enc.segments[2]) == join(minus(f[7], f[4]), minus(b[5], zero)));
  }
  // sections of 2, 4 and 2 sentences
  {
    const auto enc = encode_document(layout_document({2, 4, 2}), inputs, params);
    const auto& f = enc.states.forward;
    const auto& b = enc.states.backward;
    CHECK(to_vec(enc.segments[0]) == join(minus(f[1], zero), minus(b[0], b[2])));
    CHECK(to_vec(enc.segments[1]) == join(minus(f[5], f[1]), minus(b[2], b[6])));
    CHECK(to_vec(enc.segments[2]) == join(minus(f[7], f[5]), minus(b[6], zero)));
    CHECK(to_vec(enc.document) == join(to_vec(f[7]), to_vec(b[0])));
    for (std::size_t i = 0; i < 8; ++i) CHECK(to_vec(enc.sentences[i]) == join(to_vec(f[i]), to_vec(b[i])));
    CHECK(enc.section_of == std::vector<std::size_t>{0, 0, 1, 1, 1, 1, 2, 2});
  }
}

TEST_CASE("two sections over two sentences, computed by hand") {
  const auto cfg = small_config(DecoderKind::kConcat, 3, 2);
  const auto params = random_params(cfg, 5);
  const auto inputs = random_inputs(2, 3, 6);
  const Tensor zero = Tensor::zeros({2});
  const Tensor f0 = gru_cell(inputs[0], zero, params.forward);
  const Tensor f1 = gru_cell(inputs[1], f0, params.forward);
  const Tensor b1 = gru_cell(inputs[1], zero, params.backward);
  const Tensor b0 = gru_cell(inputs[0], b1, params.backward);

  const auto enc = encode_document(layout_document({1, 1}), inputs, params);
  const auto l0 = to_vec(enc.segments[0]);
  const auto l1 = to_vec(enc.segments[1]);
  REQUIRE(l0.size() == 4);
  for (std::size_t k = 0; k < 2; ++k) {
    CHECK(l0[k] == f0[k]);
    CHECK(l0[2 + k] == b0[k] - b1[k]);
    CHECK(l1[k] == f1[k] - f0[k]);
    CHECK(l1[2 + k] == b1[k]);
  }
}

TEST_CASE("decoder input widths follow the enabled views") {
  const std::size_t d_hid = 3;
  struct Case {
    const char* ablation;
    std::size_t width;
  };
  const auto doc = layout_document({2, 2});
  const auto inputs = random_inputs(4, 5, 1);
  for (const auto& c : {Case{"bsl", 2}, Case{"bsl+l", 4}, Case{"bsl+g", 4}, Case{"bsl+l+g", 6}}) {
    CAPTURE(c.ablation);
    auto cfg = small_config(DecoderKind::kAttentive);
    apply_ablation(cfg, c.ablation);
    if (std::string(c.ablation) != "bsl+l+g") CHECK(cfg.decoder == DecoderKind::kConcat);
    cfg.decoder = DecoderKind::kConcat;
    CHECK(cfg.decoder_input_width() == d_hid * c.width);
    const auto params = random_params(cfg, 2);
    const auto enc = encode_document(doc, inputs, params);
    const auto in = decode_concat(enc, 3, cfg);
    CHECK(in.size() == d_hid * c.width);
    CHECK(ablation_name(cfg) == c.ablation);

    const auto sr = to_vec(enc.sentences[3]);
    const auto lt = to_vec(enc.segments[1]);
    const auto d = to_vec(enc.document);
    if (c.width == 2) CHECK(to_vec(in) == sr);
    if (std::string(c.ablation) == "bsl+l") CHECK(to_vec(in) == join(lt, sr));
    if (std::string(c.ablation) == "bsl+g") CHECK(to_vec(in) == join(d, sr));
    if (c.width == 6) CHECK(to_vec(in) == join(join(d, lt), sr));
  }

  auto att = small_config(DecoderKind::kAttentive);
  CHECK(att.decoder_input_width() == 4 * d_hid);
  const auto params = random_params(att, 3);
  const auto enc = encode_document(doc, inputs, params);
  CHECK(decode_attentive(enc, 0, params, att).size() == 4 * d_hid);

  att.use_global = false;
  CHECK_THROWS(att.validate());
  ModelConfig bad;
  CHECK_THROWS(apply_ablation(bad, "bsl+x"));
}

TEST_CASE("attentive weights") {
  auto cfg = small_config(DecoderKind::kAttentive);

  SUBCASE("equal views give equal weights") {
    const auto params = random_params(cfg, 9);
    const auto enc = encode_document(layout_document({4}), random_inputs(4, cfg.d_emb, 10), params);
    for (std::size_t i = 0; i < 4; ++i) {
      const auto w = attention_weights(enc, i, params, cfg);
      if (w.fallback) continue;
      CHECK(w.global.item() == 0.5);
      CHECK(w.local.item() == 0.5);
      const auto in = to_vec(decode_attentive(enc, i, params, cfg));
      for (std::size_t k = 0; k < 2 * cfg.d_hid; ++k) CHECK(in[2 * cfg.d_hid + k] == doctest::Approx(enc.document[k]));
    }
  }
  SUBCASE("weights sum to one") {
    std::size_t exact_checked = 0;
    for (std::uint64_t seed = 0; seed < 40; ++seed) {
      const auto params = random_params(cfg, seed);
      const auto enc = encode_document(layout_document({2, 3}), random_inputs(5, cfg.d_emb, seed + 1), params);
      for (std::size_t i = 0; i < 5; ++i) {
        const auto w = attention_weights(enc, i, params, cfg);
        const double wd = w.global.item(), wl = w.local.item();
        if (wd >= 0 && wl >= 0) {
          CHECK(wd + wl == 1.0);
          ++exact_checked;
        } else {
          // mixed-sign scores give weights outside [0, 1]; the sum is one up to rounding
          CHECK(std::abs(wd + wl - 1.0) <= 1e-15 * std::max(1.0, std::abs(wd)));
        }
      }
    }
    CHECK(exact_checked > 50);
  }
  SUBCASE("vanishing denominator falls back to equal weights") {
    auto params = random_params(cfg, 4);
    for (auto& v : params.attn_v.values()) v = 0;
    const auto doc = layout_document({2, 1});
    const auto enc = encode_document(doc, random_inputs(3, cfg.d_emb, 5), params);
    std::size_t fallbacks = 0;
    const auto in = to_vec(decode_attentive(enc, 2, params, cfg, &fallbacks));
    CHECK(fallbacks == 1);
    for (std::size_t k = 0; k < 2 * cfg.d_hid; ++k) {
      CHECK(in[2 * cfg.d_hid + k] == doctest::Approx(0.5 * enc.document[k] + 0.5 * enc.segments[1][k]));
    }
    const auto scores = score_sentences(doc, random_inputs(3, cfg.d_emb, 5), params, cfg);
    CHECK(scores.attention_fallbacks == 3);
  }
}

TEST_CASE("zero output layer scores every sentence at one half") {
  for (auto decoder : {DecoderKind::kConcat, DecoderKind::kAttentive}) {
    const auto cfg = small_config(decoder);
    auto params = random_params(cfg, 7);
    for (auto& v : params.out_w.values()) v = 0;
    for (auto& v : params.out_b.values()) v = 0;
    for (const auto& doc : load_corpus(extsum::testing::data_dir() / "sample.jsonl").documents) {
      const auto s = score_sentences(doc, random_inputs(doc.sentences.size(), cfg.d_emb, 1), params, cfg);
      REQUIRE(s.probabilities.size() == doc.sentences.size());
      for (double p : s.probabilities) CHECK(p == 0.5);
    }
  }
}

TEST_CASE("model gradients match finite differences") {
  for (auto decoder : {DecoderKind::kConcat, DecoderKind::kAttentive}) {
    CAPTURE(to_string(decoder));
    auto cfg = small_config(decoder, 6, 4);
    cfg.dropout = 0.3;
    const auto params = random_params(cfg, 21);
    const auto doc = layout_document({2, 2});
    const auto inputs = random_inputs(4, cfg.d_emb, 22);
    const std::vector<int> labels{1, 0, 0, 1};
    auto loss = [&] {
      Rng rng(5);  // same dropout mask every evaluation
      ScoreOptions opts{true, &rng};
      return weighted_bce_with_logits(score_sentences(doc, inputs, params, cfg, opts).logits, labels, Real(1.5));
    };
    for (auto& t : params.trainable()) t.zero_grad();
    loss().backward();
    const auto result = extsum::testing::check_gradients(params.named(), [&] {
      NoGradGuard guard;
      return static_cast<double>(loss().item());
    });
    CHECK(result.max_rel_error < 1e-4);
    INFO(result.worst);
  }
}

TEST_CASE("scores do not depend on the order sentences are scored in") {
  const auto cfg = small_config(DecoderKind::kAttentive);
  const auto params = random_params(cfg, 31);
  const auto doc = layout_document({3, 2, 2});
  const auto enc = encode_document(doc, random_inputs(7, cfg.d_emb, 32), params);
  std::vector<Real> forward_order(7), reverse_order(7);
  for (std::size_t i = 0; i < 7; ++i) forward_order[i] = score_sentence(enc, i, params, cfg, {}).item();
  for (std::size_t i = 7; i-- > 0;) reverse_order[i] = score_sentence(enc, i, params, cfg, {}).item();
  CHECK(forward_order == reverse_order);
}

TEST_CASE("zeroed global input matches the local-only ablation bitwise") {
  auto full = small_config(DecoderKind::kConcat, 5, 4);
  full.zero_global_input = true;
  auto local_only = full;
  local_only.zero_global_input = false;
  apply_ablation(local_only, "bsl+l");

  const auto p_full = random_params(full, 51);
  auto p_local = p_full.clone();
  const std::size_t skip = 2 * full.d_hid, width = local_only.decoder_input_width();
  std::vector<Real> sliced;
  for (std::size_t r = 0; r < full.d_mlp; ++r)
    for (std::size_t c = 0; c < width; ++c) sliced.push_back(p_full.mlp_w.values()[r * full.decoder_input_width() + skip + c]);
  p_local.mlp_w = Tensor::from(sliced, {full.d_mlp, width}, true);

  const auto doc = layout_document({3, 4});
  const auto inputs = random_inputs(7, full.d_emb, 52);
  const auto a = score_sentences(doc, inputs, p_full, full);
  const auto b = score_sentences(doc, inputs, p_local, local_only);
  CHECK(to_vec(a.logits) == to_vec(b.logits));

  // with the global view zeroed, its weight columns have no influence
  auto perturbed = p_full.clone();
  for (std::size_t r = 0; r < full.d_mlp; ++r)
    for (std::size_t c = 0; c < skip; ++c) perturbed.mlp_w.values()[r * full.decoder_input_width() + c] += Real(0.75);
  CHECK(to_vec(score_sentences(doc, inputs, perturbed, full).logits) == to_vec(a.logits));
}

TEST_CASE("editing one sentence's states leaves earlier sections alone") {
  const auto cfg = small_config(DecoderKind::kConcat);
  const auto params = random_params(cfg, 61);
  const auto doc = layout_document({2, 3, 2, 3});
  const auto enc = encode_document(doc, random_inputs(10, cfg.d_emb, 62), params);
  const auto base = segment_representations(enc.states.forward, enc.states.backward, doc.sections);

  for (std::size_t k = 0; k < 10; ++k) {
    CAPTURE(k);
    auto fwd = enc.states.forward;
    auto bwd = enc.states.backward;
    fwd[k] = add(fwd[k], Tensor::vector(std::vector<Real>(cfg.d_hid, 0.25)));
    bwd[k] = add(bwd[k], Tensor::vector(std::vector<Real>(cfg.d_hid, -0.5)));
    const auto edited = segment_representations(fwd, bwd, doc.sections);
    const std::size_t t = enc.section_of[k];
    if (k == doc.sections[t].start || k == doc.sections[t].end) CHECK(to_vec(edited[t]) != to_vec(base[t]));
    for (std::size_t u = 0; u < t; ++u) {
      if (doc.sections[u].end + 1 == k) continue;  // the next section's first state bounds u
      CHECK(to_vec(edited[u]) == to_vec(base[u]));
    }

    // a real edit propagates through the recurrence and always reaches l_t
    auto inputs = random_inputs(10, cfg.d_emb, 62);
    inputs[k] = add(inputs[k], Tensor::vector(std::vector<Real>(cfg.d_emb, 0.5)));
    const auto rerun = encode_document(doc, inputs, params);
    CHECK(to_vec(rerun.segments[t]) != to_vec(base[t]));
  }
}

TEST_CASE("config and checkpoint directory round trip") {
  auto cfg = small_config(DecoderKind::kAttentive, 4, 3);
  cfg.d_attn = 5;
  const auto back = config_from_json(config_to_json(cfg));
  CHECK(back.d_emb == 4);
  CHECK(back.d_hid == 3);
  CHECK(back.d_attn == 5);
  CHECK(back.decoder == DecoderKind::kAttentive);
  CHECK(back.use_local);
  CHECK(back.use_global);

  const auto docs = load_corpus(extsum::testing::data_dir() / "sample.jsonl").documents;
  auto vocab = build_vocabulary(docs, 40);
  auto table = extsum::testing::random_embeddings(vocab, 4, 3);
  ExtractiveModel model(cfg, random_params(cfg, 8), vocab, table);
  const auto dir = extsum::testing::scratch_dir("model_dir");
  model.save(dir);
  for (const char* f : {"manifest.json", "model.bin", "embeddings.bin", "vocab.txt"}) CHECK(std::filesystem::exists(dir / f));
  const auto loaded = ExtractiveModel::load(dir);
  CHECK(loaded.vocab().tokens() == vocab.tokens());
  CHECK(ExtractiveModel::load_config(dir).d_attn == 5);
  const auto p0 = model.score(docs[2]);
  const auto p1 = loaded.score(docs[2]);
  REQUIRE(p0.size() == p1.size());
  for (std::size_t i = 0; i < p0.size(); ++i) CHECK(p1[i] == doctest::Approx(p0[i]).epsilon(1e-5));

  loaded.save(dir / "again");
  const auto reloaded = ExtractiveModel::load(dir / "again");
  CHECK(reloaded.score(docs[2]) == p1);
}
