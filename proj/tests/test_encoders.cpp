#include <doctest.h>

#include <fstream>
#include <numeric>

#include "sancl/attention.hpp"
#include "sancl/encoders.hpp"
#include "sancl/errors.hpp"
#include "sancl/grad_check.hpp"
#include "test_util.hpp"

using namespace sancl;
using testing::max_abs_diff;
using testing::random_matrix;

namespace {

// Dense reference helpers, written with plain loops.
Matrix ref_mul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      long double s = 0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += static_cast<long double>(a(i, k)) * b(k, j);
      c(i, j) = static_cast<double>(s);
    }
  return c;
}

Matrix ref_t(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

Matrix ref_softmax(Matrix x) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    long double z = 0;
    for (std::size_t j = 0; j < x.cols(); ++j) z += std::exp(static_cast<long double>(x(i, j)));
    for (std::size_t j = 0; j < x.cols(); ++j) x(i, j) = static_cast<double>(std::exp(static_cast<long double>(x(i, j))) / z);
  }
  return x;
}

Matrix ref_attention(const Matrix& q, const Matrix& w, const Matrix& k) {
  Matrix s = ref_mul(ref_mul(q, w), ref_t(k));
  const double inv = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  for (auto& x : s.data()) x *= inv;
  return ref_softmax(s);
}

Matrix ref_add(Matrix a, const Matrix& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
  return a;
}

Matrix ref_mean(const Matrix& h) {
  Matrix m(1, h.cols());
  for (std::size_t j = 0; j < h.cols(); ++j) {
    long double s = 0;
    for (std::size_t i = 0; i < h.rows(); ++i) s += h(i, j);
    m(0, j) = static_cast<double>(s / h.rows());
  }
  return m;
}

Matrix permute_rows(const Matrix& m, const std::vector<std::size_t>& perm) {
  Matrix out(m.rows(), m.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) out(i, j) = m(perm[i], j);
  return out;
}

}  // namespace

TEST_CASE("vocabulary reserves pad and unk") {
  enc::Vocabulary v({"Good", "sofa", "good"});
  CHECK(v.size() == 4);
  CHECK(v.index("<pad>") == enc::kPad);
  CHECK(v.index("never-seen") == enc::kUnk);
  CHECK(v.index("GOOD") == v.index("good"));
  CHECK(v.indices({"sofa", "x"}) == std::vector<std::size_t>{3, enc::kUnk});
}

TEST_CASE("embed") {
  Rng rng(1);
  enc::EmbeddingTable table(enc::Vocabulary({"alpha", "beta"}), 6, rng);
  CHECK(table.weights().value.rows() == 4);
  for (std::size_t c = 0; c < 6; ++c) {
    CHECK(table.weights().value(enc::kPad, c) == 0.0);
    CHECK(table.weights().value(enc::kUnk, c) == 0.0);
    CHECK(std::abs(table.weights().value(2, c)) <= 0.1);
  }
  table.weights().value(enc::kUnk, 2) = 0.7;

  const ad::Var unk = table.embed({"zz", "yy", "xx"});
  CHECK(unk.rows() == 3);
  for (std::size_t r = 0; r < 3; ++r)
    for (std::size_t c = 0; c < 6; ++c) CHECK(unk.value()(r, c) == table.weights().value(enc::kUnk, c));

  Rng drop_rng(9);
  CHECK(table.embed({"alpha", "beta"}, 0.0, &drop_rng).value() == table.embed({"alpha", "beta"}).value());
  const Matrix dropped = table.embed({"alpha", "beta"}, 0.5, &drop_rng).value();
  const Matrix plain = table.embed({"alpha", "beta"}).value();
  for (std::size_t i = 0; i < plain.size(); ++i) CHECK((dropped[i] == 0.0 || dropped[i] == 2.0 * plain[i]));

  CHECK_THROWS_AS(table.embed({}), DomainError);
}

TEST_CASE("pretrained vectors are read back exactly") {
  const auto dir = testing::scratch_dir("embeddings");
  const std::string text =
      "sofa 0.125 -1.5 3.0000001 1e-7\n"
      "pin -0.333333333333 2.5 0 7\n"
      "other 1 2 3 4\n";
  {
    std::ofstream out(dir / "vec.txt");
    out << text;
  }
  Rng rng(4);
  std::size_t found = 0;
  auto table = enc::EmbeddingTable::from_text_file(dir / "vec.txt", enc::Vocabulary({"pin", "sofa", "zzz"}), rng,
                                                   false, &found);
  CHECK(found == 2);
  CHECK(table.dim() == 4);
  CHECK(!table.weights().trainable);
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "other") continue;
    const std::size_t r = table.vocab().index(word);
    for (std::size_t c = 0; c < 4; ++c) {
      std::string tok;
      ls >> tok;
      CHECK(table.weights().value(r, c) == std::strtod(tok.c_str(), nullptr));
    }
  }
  {
    std::ofstream out(dir / "bad.txt");
    out << "a 1 2\nb 1 2 3\n";
  }
  try {
    enc::EmbeddingTable::from_text_file(dir / "bad.txt", enc::Vocabulary(), rng);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
  }
}

TEST_CASE("encode_text") {
  Rng rng(3);
  GruParams gp("gru", 5, 4);
  gp.w_x.value = random_matrix(rng, 5, 12);
  gp.w_h.value = random_matrix(rng, 4, 12);
  gp.bias.value = random_matrix(rng, 1, 12);
  const GruVars vars = GruVars::bind(gp);

  const Matrix x = random_matrix(rng, 7, 5);
  const auto full = enc::encode_text(ad::constant(x), vars);
  CHECK(full.token_states.rows() == 7);
  CHECK(full.token_states.cols() == 4);

  const auto one = enc::encode_text(ad::constant(Matrix::from_rows({{0.1, 0.2, -0.3, 0.4, 0.5}})), vars);
  CHECK(one.sequence_state.value() == ad::take_row(one.token_states, 0).value());

  // Prefix property.
  for (std::size_t k = 1; k <= 7; ++k) {
    Matrix prefix(k, 5);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < 5; ++j) prefix(i, j) = x(i, j);
    const auto part = enc::encode_text(ad::constant(prefix), vars);
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < 4; ++j) REQUIRE(part.token_states.value()(i, j) == full.token_states.value()(i, j));
  }

  // Cell-loop oracle.
  ad::Var h = ad::constant(Matrix(1, 4));
  for (std::size_t t = 0; t < 7; ++t) {
    h = gru_cell(ad::take_row(ad::constant(x), t), h, vars);
    CHECK(max_abs_diff(h.value(), ad::take_row(full.token_states, t).value()) < 1e-10);
  }
  CHECK(max_abs_diff(h.value(), full.sequence_state.value()) < 1e-10);
}

TEST_CASE("encode_visual") {
  Rng rng(8);
  const std::size_t d = 4;
  const Matrix wa = random_matrix(rng, d, d), wv = random_matrix(rng, d, d);

  const Matrix single = random_matrix(rng, 1, d);
  const Matrix out1 = enc::encode_visual(ad::constant(single), ad::constant(wa), ad::constant(wv)).value();
  CHECK(out1.rows() == 1);
  CHECK(max_abs_diff(out1, ref_add(single, ref_mul(single, wv))) < 1e-12);

  const Matrix e = random_matrix(rng, 5, d);
  const Matrix out = enc::encode_visual(ad::constant(e), ad::constant(wa), ad::constant(wv)).value();
  const Matrix expect = ref_add(e, ref_mul(ref_attention(e, wa, e), ref_mul(e, wv)));
  CHECK(max_abs_diff(out, expect) < 1e-12);

  const std::vector<std::size_t> perm = {3, 0, 4, 2, 1};
  const Matrix permuted =
      enc::encode_visual(ad::constant(permute_rows(e, perm)), ad::constant(wa), ad::constant(wv)).value();
  CHECK(max_abs_diff(permuted, permute_rows(out, perm)) < 1e-12);

  CHECK_THROWS_AS(enc::encode_visual(ad::constant(Matrix(0, d)), ad::constant(wa), ad::constant(wv)), ValidationError);
  CHECK_THROWS_AS(enc::encode_visual(ad::constant(Matrix(2, d + 1)), ad::constant(wa), ad::constant(wv)),
                  DimensionError);
}

TEST_CASE("base_attention") {
  Rng rng(12);
  const Matrix wa = random_matrix(rng, 3, 3);
  CHECK(attn::base_attention(ad::constant(random_matrix(rng, 1, 3)), ad::constant(wa)).value() ==
        Matrix::from_rows({{1.0}}));

  const Matrix h = random_matrix(rng, 4, 3);
  const Matrix uniform = attn::base_attention(ad::constant(h), ad::constant(Matrix(3, 3))).value();
  for (double x : uniform.data()) CHECK(x == doctest::Approx(0.25).epsilon(1e-15));

  const Matrix a = attn::base_attention(ad::constant(h), ad::constant(wa)).value();
  CHECK(max_abs_diff(a, ref_attention(h, wa, h)) < 1e-12);
  for (std::size_t i = 0; i < 4; ++i) {
    double s = 0;
    for (std::size_t j = 0; j < 4; ++j) s += a(i, j);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("reweight") {
  Rng rng(13);
  const Matrix h = random_matrix(rng, 5, 3);
  const Matrix a = attn::base_attention(ad::constant(h), ad::constant(random_matrix(rng, 3, 3))).value();
  CHECK(attn::reweight(a, std::vector<double>(5, 1.0)) == a);
  CHECK(attn::reweight(ad::constant(a), ad::constant(Matrix(1, 5) )).value() == Matrix(5, 5));

  const Matrix two = Matrix::from_rows({{0.8, 0.2}, {0.5, 0.5}});
  CHECK(attn::reweight(two, {1.0, 0.5})(0, 1) == 0.1);

  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t l = 1 + rng.index(8);
    const Matrix hh = random_matrix(rng, l, 3);
    const Matrix aa = attn::base_attention(ad::constant(hh), ad::constant(random_matrix(rng, 3, 3))).value();
    const double beta = rng.uniform(0.01, 0.99);
    std::vector<double> m(l);
    Matrix mrow(1, l);
    std::vector<bool> hot(l);
    for (std::size_t i = 0; i < l; ++i) {
      hot[i] = rng.bernoulli(0.5);
      m[i] = mrow[i] = hot[i] ? 1.0 : beta;
    }
    const Matrix plain = attn::reweight(aa, m);
    const Matrix graph = attn::reweight(ad::constant(aa), ad::constant(mrow)).value();
    for (std::size_t i = 0; i < l; ++i)
      for (std::size_t j = 0; j < l; ++j) {
        const double f = hot[i] && hot[j] ? 1.0 : (hot[i] || hot[j] ? beta : beta * beta);
        REQUIRE(testing::ulp_distance(plain(i, j), f * aa(i, j)) <= 4);
        REQUIRE(testing::ulp_distance(graph(i, j), f * aa(i, j)) <= 4);
        REQUIRE(plain(i, j) <= aa(i, j));
      }
  }
  CHECK_THROWS_AS(attn::reweight(a, std::vector<double>(4, 1.0)), DimensionError);
}

TEST_CASE("self_attend") {
  Rng rng(14);
  const Matrix h = random_matrix(rng, 4, 3);
  const Matrix wv = random_matrix(rng, 3, 3);
  const Matrix a = attn::base_attention(ad::constant(h), ad::constant(random_matrix(rng, 3, 3))).value();
  CHECK(attn::self_attend(ad::constant(h), ad::constant(Matrix(4, 4)), ad::constant(wv)).value() == h);
  const Matrix out = attn::self_attend(ad::constant(h), ad::constant(a), ad::constant(wv)).value();
  CHECK(max_abs_diff(out, ref_add(h, ref_mul(a, ref_mul(h, wv)))) < 1e-12);
  const Matrix plain = attn::self_attend(ad::constant(h), ad::constant(a), ad::constant(wv), true).value();
  CHECK(max_abs_diff(plain, ref_add(h, ref_mul(a, h))) < 1e-12);

  // Cold-only mask with tiny beta leaves H nearly unchanged.
  Matrix cold(1, 4);
  cold.fill(1e-9);
  const Matrix faded =
      attn::self_attend(ad::constant(h), attn::reweight(ad::constant(a), ad::constant(cold)), ad::constant(wv)).value();
  CHECK(max_abs_diff(faded, h) < 1e-15);

  // d(loss)/d(beta) is nonzero for a mixed mask and agrees in sign with finite differences.
  const std::vector<double> hot = {1, 0, 1, 0};
  const Matrix w_out = random_matrix(rng, 4, 3);
  auto loss_at = [&](const ad::Var& beta) {
    Matrix hot_part(1, 4), cold_part(1, 4);
    for (std::size_t i = 0; i < 4; ++i) {
      hot_part[i] = hot[i];
      cold_part[i] = 1.0 - hot[i];
    }
    const ad::Var m = ad::add(ad::constant(hot_part), ad::mul_scalar(ad::constant(cold_part), beta));
    const ad::Var hv = attn::self_attend(ad::constant(h), attn::reweight(ad::constant(a), m), ad::constant(wv));
    return ad::dot(hv, ad::constant(w_out));
  };
  const ad::Var beta = ad::variable(Matrix::from_rows({{0.4}}));
  ad::backward(loss_at(beta));
  const double g = beta.grad()[0];
  const double eps = 1e-6;
  const double fd = (loss_at(ad::constant_scalar(0.4 + eps)).scalar() - loss_at(ad::constant_scalar(0.4 - eps)).scalar()) /
                    (2 * eps);
  CHECK(g != 0.0);
  CHECK((g > 0) == (fd > 0));
  CHECK(std::abs(g - fd) < 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST_CASE("hot-to-hot over hot-to-cold is alpha over beta") {
  const double alpha = 1.0;
  Rng rng(21);
  for (int trial = 0; trial < 100; ++trial) {
    const double beta = rng.uniform(0.01, 0.99);
    const double base = rng.uniform(0.01, 0.5);
    Matrix a(2, 2);
    a.fill(base);
    const Matrix ap = attn::reweight(a, {alpha, beta});
    // a'11 / a'10 == alpha / beta, compared without division.
    REQUIRE(ap(0, 0) * beta == ap(0, 1) * alpha);
  }
}

TEST_CASE("cold tokens never receive more attention after masking") {
  Rng rng(22);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t l = 2 + rng.index(7);
    const Matrix a =
        attn::base_attention(ad::constant(random_matrix(rng, l, 3)), ad::constant(random_matrix(rng, 3, 3))).value();
    const double beta = rng.uniform(0.01, 0.99);
    std::vector<double> m(l);
    for (auto& x : m) x = rng.bernoulli(0.5) ? 1.0 : beta;
    const Matrix ap = attn::reweight(a, m);
    double before = 0, after = 0;
    for (std::size_t j = 0; j < l; ++j) {
      if (m[j] == 1.0) continue;
      for (std::size_t i = 0; i < l; ++i) {
        before += a(i, j);
        after += ap(i, j);
      }
    }
    REQUIRE(after <= before);
  }
}

TEST_CASE("cross_field_attend") {
  Rng rng(15);
  const Matrix hr = random_matrix(rng, 4, 3), wc = random_matrix(rng, 3, 3), wu = random_matrix(rng, 3, 3);
  const Matrix hp1 = random_matrix(rng, 1, 3);
  const Matrix out1 = attn::cross_field_attend(ad::constant(hr), ad::constant(hp1), ad::constant(wc), ad::constant(wu)).value();
  const Matrix v = ref_mul(hp1, wu);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(out1(i, j) - (hr(i, j) + v(0, j))) < 1e-12);

  const Matrix hp = random_matrix(rng, 6, 3);
  const Matrix out = attn::cross_field_attend(ad::constant(hr), ad::constant(hp), ad::constant(wc), ad::constant(wu)).value();
  CHECK(out.rows() == 4);
  CHECK(max_abs_diff(out, ref_add(hr, ref_mul(ref_attention(hr, wc, hp), ref_mul(hp, wu)))) < 1e-12);
}

TEST_CASE("masked_pool") {
  Rng rng(16);
  const Matrix h = random_matrix(rng, 5, 3);
  Matrix cold(1, 5);
  cold.fill(0.37);
  CHECK(max_abs_diff(attn::masked_pool(ad::constant(h), ad::constant(cold)).value(), ref_mean(h)) < 1e-15);

  Matrix one_hot = Matrix::from_rows({{1e-12, 1.0, 1.0, 1e-12, 1e-12}});
  Matrix sent(2, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    sent(0, j) = h(1, j);
    sent(1, j) = h(2, j);
  }
  CHECK(max_abs_diff(attn::masked_pool(ad::constant(h), ad::constant(one_hot)).value(), ref_mean(sent)) < 1e-10);

  const Matrix m = Matrix::from_rows({{1.0, 0.3, 0.3, 1.0, 0.3}});
  Matrix expect(1, 3);
  for (std::size_t j = 0; j < 3; ++j) {
    long double num = 0, den = 0;
    for (std::size_t i = 0; i < 5; ++i) {
      num += m[i] * h(i, j);
      den += m[i];
    }
    expect(0, j) = static_cast<double>(num / den);
  }
  CHECK(max_abs_diff(attn::masked_pool(ad::constant(h), ad::constant(m)).value(), expect) < 1e-15);
}

TEST_CASE("visual_pipeline") {
  Rng rng(17);
  const Matrix wc = random_matrix(rng, 3, 3), wu = random_matrix(rng, 3, 3);
  const Matrix e = random_matrix(rng, 4, 3);
  auto [sr, sp] = attn::visual_pipeline(ad::constant(e), ad::constant(e), ad::constant(wc), ad::constant(wu));
  CHECK(sr.value() == sp.value());

  const Matrix r1 = random_matrix(rng, 1, 3), p1 = random_matrix(rng, 1, 3);
  auto [a, b] = attn::visual_pipeline(ad::constant(r1), ad::constant(p1), ad::constant(wc), ad::constant(wu));
  CHECK(max_abs_diff(a.value(), ref_add(r1, ref_mul(p1, wu))) < 1e-12);
  CHECK(max_abs_diff(b.value(), ref_add(p1, ref_mul(r1, wu))) < 1e-12);

  const Matrix hr = random_matrix(rng, 3, 3), hp = random_matrix(rng, 5, 3);
  auto [x, y] = attn::visual_pipeline(ad::constant(hr), ad::constant(hp), ad::constant(wc), ad::constant(wu));
  CHECK(max_abs_diff(x.value(), ref_mean(ref_add(hr, ref_mul(ref_attention(hr, wc, hp), ref_mul(hp, wu))))) < 1e-12);
  CHECK(max_abs_diff(y.value(), ref_mean(ref_add(hp, ref_mul(ref_attention(hp, wc, hr), ref_mul(hr, wu))))) < 1e-12);
}

TEST_CASE("attention and encoders pass grad_check") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Parameter h("h", random_matrix(rng, 4, 3)), hp("hp", random_matrix(rng, 3, 3));
    Parameter wa("wa", random_matrix(rng, 3, 3)), wv("wv", random_matrix(rng, 3, 3));
    Parameter wc("wc", random_matrix(rng, 3, 3)), wu("wu", random_matrix(rng, 3, 3));
    Parameter beta("beta", Matrix::from_rows({{0.3}}));
    const Matrix hot = Matrix::from_rows({{1, 0, 0, 1}}), cold = Matrix::from_rows({{0, 1, 1, 0}});
    const Matrix out_w = random_matrix(rng, 4, 3), pool_w = random_matrix(rng, 1, 3);
    auto loss = [&] {
      const ad::Var H = ad::leaf(h), HP = ad::leaf(hp);
      const ad::Var m = ad::add(ad::constant(hot), ad::mul_scalar(ad::constant(cold), ad::leaf(beta)));
      const ad::Var a = attn::reweight(attn::base_attention(H, ad::leaf(wa)), m);
      const ad::Var h1 = attn::self_attend(H, a, ad::leaf(wv));
      const ad::Var h2 = attn::cross_field_attend(h1, enc::encode_visual(HP, ad::leaf(wa), ad::leaf(wv)),
                                                  ad::leaf(wc), ad::leaf(wu));
      auto [vr, vp] = attn::visual_pipeline(H, HP, ad::leaf(wc), ad::leaf(wu));
      return ad::add(ad::add(ad::dot(h2, ad::constant(out_w)), ad::dot(attn::masked_pool(h2, m), ad::constant(pool_w))),
                     ad::dot(vr, vp));
    };
    Parameter* params[] = {&h, &hp, &wa, &wv, &wc, &wu, &beta};
    const auto res = grad_check(loss, params);
    INFO("seed " << seed);
    CHECK(res.max_relative_error < 1e-5);
  }
}
