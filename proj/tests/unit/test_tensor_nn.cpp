#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>

#include "macflow/autodiff.hpp"
#include "macflow/checkpoint.hpp"
#include "macflow/kernels.hpp"
#include "macflow/mlp.hpp"
#include "macflow/optim.hpp"
#include "macflow/rng.hpp"

using namespace macflow;

namespace {

// Reference forward pass written directly from the layer definition.
Tensor oracle_forward(const MlpParams& p, const Tensor& x) {
  Tensor h = x;
  for (std::size_t li = 0; li < p.layer_count(); ++li) {
    const DenseLayer& l = p.layer(li);
    Tensor out(h.rows(), l.weight.cols());
    for (std::size_t r = 0; r < h.rows(); ++r) {
      for (std::size_t j = 0; j < l.weight.cols(); ++j) {
        double acc = l.bias[j];
        for (std::size_t i = 0; i < l.weight.rows(); ++i) acc += h(r, i) * l.weight(i, j);
        out(r, j) = acc;
      }
    }
    if (li + 1 < p.layer_count()) {
      for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
      if (p.layer_norm()) {
        for (std::size_t r = 0; r < out.rows(); ++r) {
          auto row = out.row_span(r);
          double mu = 0, var = 0;
          for (double v : row) mu += v;
          mu /= row.size();
          for (double v : row) var += (v - mu) * (v - mu);
          var /= row.size();
          for (std::size_t c = 0; c < row.size(); ++c)
            row[c] = (row[c] - mu) / std::sqrt(var + kLayerNormEps) * l.ln_gain[c] + l.ln_offset[c];
        }
      }
    }
    h = out;
  }
  return h;
}

MlpParams randomize(MlpParams p, Rng& rng, double scale = 0.5) {
  p.for_each_tensor([&](Tensor& t) {
    for (double& v : t.values()) v += scale * rng.normal();
  });
  return p;
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

// Central finite differences of a scalar function of the parameters.
double max_fd_error(const MlpParams& params,
                    const std::function<Var(Tape&, const BoundMlp&)>& loss_fn) {
  const MlpParams g = grad(loss_fn, params);
  const auto eval = [&](const MlpParams& p) {
    Tape tape;
    return loss_fn(tape, bind(tape, p, false)).value().item();
  };
  std::vector<const Tensor*> grads;
  g.for_each_tensor([&](const Tensor& t) { grads.push_back(&t); });
  double worst = 0.0;
  MlpParams probe = params;
  std::vector<Tensor*> slots;
  probe.for_each_tensor([&](Tensor& t) { slots.push_back(&t); });
  constexpr double h = 1e-5;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    for (std::size_t i = 0; i < slots[k]->size(); ++i) {
      const double orig = (*slots[k])[i];
      (*slots[k])[i] = orig + h;
      const double up = eval(probe);
      (*slots[k])[i] = orig - h;
      const double down = eval(probe);
      (*slots[k])[i] = orig;
      worst = std::max(worst, rel_err((up - down) / (2 * h), (*grads[k])[i]));
    }
  }
  return worst;
}

}  // namespace

TEST_CASE("mlp_forward: zero network maps everything to zero") {
  const MlpParams p = MlpParams::zeros({3, {5, 4}, 2, true});
  Rng rng(1);
  const Tensor y = mlp_forward(p, rng.normal_tensor(6, 3));
  for (double v : y.values()) CHECK(v == 0.0);
}

TEST_CASE("mlp_forward: identity linear layer") {
  MlpParams p = MlpParams::zeros({2, {}, 2, false});
  p.layer(0).weight(0, 0) = 1.0;
  p.layer(0).weight(1, 1) = 1.0;
  const Tensor y = mlp_forward(p, Tensor::row({1.0, 2.0}));
  CHECK(y(0, 0) == 1.0);
  CHECK(y(0, 1) == 2.0);
}

TEST_CASE("mlp_forward: random 2-4-1 net matches dense matmul oracle") {
  Rng rng(7);
  for (bool ln : {false, true}) {
    const MlpParams p = randomize(MlpParams::init({2, {4}, 1, ln}, rng), rng);
    const Tensor x = rng.normal_tensor(5, 2);
    const Tensor y = mlp_forward(p, x);
    const Tensor ref = oracle_forward(p, x);
    for (std::size_t i = 0; i < y.size(); ++i) CHECK(std::abs(y[i] - ref[i]) <= 1e-12);
  }
}

TEST_CASE("mlp_forward: shape mismatch names both dimensions") {
  const MlpParams p = MlpParams::zeros({3, {4}, 1, true});
  try {
    mlp_forward(p, Tensor(1, 2));
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("expected input dimension 3") != std::string::npos);
    CHECK(msg.find("got 2") != std::string::npos);
  }
}

TEST_CASE("tape forward equals inference forward bitwise") {
  Rng rng(3);
  const MlpParams p = randomize(MlpParams::init({6, {16, 16}, 3, true}, rng), rng, 0.1);
  const Tensor x = rng.normal_tensor(9, 6);
  Tape tape;
  const Var y = mlp_apply(bind(tape, p, true), tape.constant(x));
  CHECK(y.value() == mlp_forward(p, x));
}

TEST_CASE("grad: d(w^2)/dw = 2w on a single weight") {
  MlpParams p = MlpParams::zeros({2, {}, 2, false});
  p.layer(0).weight(1, 0) = 3.0;
  const MlpParams g = grad(
      [](Tape&, const BoundMlp& net) {
        return ad::sum(ad::square(ad::slice_columns(net.tensors[0], 0, 1)));
      },
      p);
  CHECK(g.layer(0).weight(1, 0) == doctest::Approx(6.0));
  CHECK(g.layer(0).weight(0, 0) == 0.0);
  CHECK(g.layer(0).weight(1, 1) == 0.0);
  CHECK(g.layer(0).bias[0] == 0.0);
}

TEST_CASE("grad: constant loss has zero gradient") {
  Rng rng(2);
  const MlpParams p = MlpParams::init({3, {4}, 2, true}, rng);
  const MlpParams g = grad([](Tape& t, const BoundMlp&) { return t.constant(Tensor::scalar(4.2)); }, p);
  g.for_each_tensor([](const Tensor& t) {
    for (double v : t.values()) CHECK(v == 0.0);
  });
}

TEST_CASE("grad: non-scalar loss is rejected") {
  Rng rng(2);
  const MlpParams p = MlpParams::init({3, {4}, 2, true}, rng);
  CHECK_THROWS_AS(grad([](Tape& t, const BoundMlp& net) {
                    return mlp_apply(net, t.constant(Tensor(2, 3, 1.0)));
                  },
                  p),
                  std::invalid_argument);
}

TEST_CASE("grad: matches central finite differences on 24 random small nets") {
  Rng rng(11);
  double worst = 0.0;
  for (int trial = 0; trial < 24; ++trial) {
    const std::size_t depth = 1 + rng.index(3);
    std::vector<std::size_t> hidden;
    for (std::size_t d = 0; d < depth; ++d) hidden.push_back(2 + rng.index(7));
    const std::size_t in = 1 + rng.index(8), out = 1 + rng.index(8);
    const MlpParams p = randomize(MlpParams::init({in, hidden, out, trial % 2 == 0}, rng), rng, 0.3);
    const Tensor x = rng.normal_tensor(4, in);
    const Tensor target = rng.normal_tensor(4, out);
    worst = std::max(worst, max_fd_error(p, [&](Tape& t, const BoundMlp& net) {
      const Var y = mlp_apply(net, t.constant(x));
      return ad::mean(ad::square(ad::sub(y, t.constant(target))));
    }));
  }
  CHECK(worst <= 1e-4);
}

TEST_CASE("grad: composite ops (softmax, row sums, broadcasts, concat) match finite differences") {
  Rng rng(5);
  const MlpParams p = randomize(MlpParams::init({3, {6}, 4, true}, rng), rng, 0.3);
  const Tensor x = rng.normal_tensor(5, 3);
  const Tensor col = rng.normal_tensor(5, 1);
  const Tensor q = rng.normal_tensor(5, 4);
  const double err = max_fd_error(p, [&](Tape& t, const BoundMlp& net) {
    const Var y = mlp_apply(net, t.constant(x));
    const Var probs = ad::softmax_rows(y);
    const Var expected = ad::row_sum(ad::mul(probs, t.constant(q)));
    const Var left = ad::slice_columns(y, 0, 2);
    const Var right = ad::slice_columns(y, 2, 2);
    const Var parts[] = {ad::scale(right, 0.5), ad::tanh(left)};
    const Var joined = ad::mul_col(ad::concat_columns(parts), t.constant(col));
    return ad::add(ad::mean(expected), ad::mean(ad::square(joined)));
  });
  CHECK(err <= 1e-4);
}

TEST_CASE("layer norm output has zero mean and unit variance per row") {
  Rng rng(9);
  Tape tape;
  const Var y = ad::normalize_rows(tape.constant(rng.normal_tensor(20, 16)), kLayerNormEps);
  for (std::size_t r = 0; r < 20; ++r) {
    double mu = 0, var = 0;
    for (double v : y.value().row_span(r)) mu += v;
    mu /= 16;
    for (double v : y.value().row_span(r)) var += (v - mu) * (v - mu);
    var /= 16;
    CHECK(std::abs(mu) <= 1e-9);
    CHECK(std::abs(var - 1.0) <= 1e-9);
  }
}

TEST_CASE("layer-norm flag is part of the immutable architecture") {
  Rng rng(1);
  const MlpParams p = MlpParams::init({3, {4}, 1, true}, rng);
  CHECK(p.layer_norm());
  CHECK_FALSE(p.layer(0).ln_gain.empty());
  CHECK(p.layer(1).ln_gain.empty());
  MlpParams broken = p;
  broken.layer(0).ln_gain = Tensor();
  CHECK_THROWS(broken.validate());
}

TEST_CASE("serial and OpenMP kernels agree bitwise") {
  Rng rng(4);
  const Tensor a = rng.normal_tensor(37, 29);
  const Tensor b = rng.normal_tensor(29, 41);
  const Tensor c = rng.normal_tensor(37, 41);
  Tensor s(37, 41), p(37, 41);
  kernels::gemm_serial(a.data(), b.data(), s.data(), 37, 29, 41, false);
  kernels::gemm_parallel(a.data(), b.data(), p.data(), 37, 29, 41, false);
  CHECK(s == p);
  Tensor st(29, 41), pt(29, 41);
  kernels::gemm_tn_serial(a.data(), c.data(), st.data(), 37, 29, 41, false);
  kernels::gemm_tn_parallel(a.data(), c.data(), pt.data(), 37, 29, 41, false);
  CHECK(st == pt);
  Tensor sn(37, 29), pn(37, 29);
  kernels::gemm_nt_serial(c.data(), b.data(), sn.data(), 37, 29, 41, false);
  kernels::gemm_nt_parallel(c.data(), b.data(), pn.data(), 37, 29, 41, false);
  CHECK(sn == pn);
  // Reference value for one entry.
  double acc = 0.0;
  for (std::size_t k = 0; k < 29; ++k) acc += a(3, k) * b(k, 5);
  CHECK(std::abs(s(3, 5) - acc) <= 1e-12);
}

TEST_CASE("adam: zero gradient leaves params unchanged but counts the step") {
  Rng rng(1);
  const MlpParams p = MlpParams::init({3, {4}, 2, true}, rng);
  const AdamResult r = adam_step(p, p.zeros_like(), AdamState::init(p));
  CHECK(r.params == p);
  CHECK(r.state.step == 1);
}

TEST_CASE("adam: learning rate zero leaves params unchanged") {
  Rng rng(1);
  const MlpParams p = MlpParams::init({3, {4}, 2, true}, rng);
  MlpParams g = p;
  const AdamResult r = adam_step(p, g, AdamState::init(p, {0.0, 0.9, 0.999, 1e-5}));
  CHECK(r.params == p);
}

TEST_CASE("adam: scalar update matches a hand recursion") {
  MlpParams p = MlpParams::zeros({1, {}, 1, false});
  p.layer(0).weight[0] = 0.5;
  MlpParams g = p.zeros_like();
  g.layer(0).weight[0] = 1.0;
  AdamState s = AdamState::init(p, {0.1, 0.9, 0.999, 1e-5});
  AdamResult r = adam_step(p, g, s);
  CHECK(std::abs(r.params.layer(0).weight[0] - (0.5 - 0.1 * 1.0 / (1.0 + 1e-5))) <= 1e-12);

  // Three more steps with varying gradients.
  double w = r.params.layer(0).weight[0], m = 0.1, v = 0.001;
  const double grads[] = {-2.0, 0.5, 3.0};
  for (int t = 2; t <= 4; ++t) {
    const double gt = grads[t - 2];
    g.layer(0).weight[0] = gt;
    r = adam_step(r.params, g, r.state);
    m = 0.9 * m + 0.1 * gt;
    v = 0.999 * v + 0.001 * gt * gt;
    w -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-5);
    CHECK(std::abs(r.params.layer(0).weight[0] - w) <= 1e-12);
  }
  CHECK(r.state.step == 4);
}

TEST_CASE("adam: NaN gradient aborts") {
  MlpParams p = MlpParams::zeros({1, {}, 1, false});
  MlpParams g = p.zeros_like();
  g.layer(0).bias[0] = std::nan("");
  CHECK_THROWS_AS(adam_step(p, g, AdamState::init(p)), std::runtime_error);
}

TEST_CASE("polyak_update") {
  MlpParams target = MlpParams::zeros({1, {}, 1, false});
  MlpParams online = target;
  target.layer(0).weight[0] = 2.0;
  online.layer(0).weight[0] = 4.0;
  CHECK(polyak_update(target, online, 0.0) == target);
  CHECK(polyak_update(target, online, 1.0) == online);
  CHECK(polyak_update(target, online, 0.5).layer(0).weight[0] == 3.0);
  CHECK_THROWS_AS(polyak_update(target, online, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(polyak_update(target, online, -0.1), std::invalid_argument);
  Rng rng(1);
  const MlpParams same = randomize(MlpParams::init({3, {5}, 2, true}, rng), rng);
  CHECK(polyak_update(same, same, 0.005) == same);
}

TEST_CASE("checkpoint round trip and corruption") {
  Rng rng(8);
  const MlpParams a = MlpParams::init({5, {7, 3}, 2, true}, rng);
  const MlpParams b = MlpParams::init({2, {}, 1, false}, rng);
  const auto path = std::filesystem::temp_directory_path() / "macflow_ckpt_test.bin";
  save_checkpoint(path, {{"a", a}, {"b", b}});
  const auto loaded = load_checkpoint(path);
  REQUIRE(loaded.size() == 2);
  CHECK(find_network(loaded, "a") == a);
  CHECK(find_network(loaded, "b") == b);
  CHECK_THROWS(find_network(loaded, "c"));

  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 4);
  CHECK_THROWS_AS(load_checkpoint(path), std::runtime_error);
  std::filesystem::remove(path);
}

TEST_CASE("forward is deterministic") {
  Rng rng(12);
  const MlpParams p = MlpParams::init({4, {8}, 2, true}, rng);
  const Tensor x = rng.normal_tensor(3, 4);
  CHECK(mlp_forward(p, x) == mlp_forward(p, x));
  Rng r1(5), r2(5);
  CHECK(MlpParams::init({4, {8}, 2, true}, r1) == MlpParams::init({4, {8}, 2, true}, r2));
}
