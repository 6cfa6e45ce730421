// Acceptance driver: prints one PASS/FAIL line per criterion and exits non-zero if any fail.
// Criteria 1-5 run in process; 6-9 drive the command-line tool end to end.

#include <CLI11.hpp>

#include <sys/wait.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cordvip/corrnet.hpp"
#include "cordvip/diffpolicy.hpp"
#include "cordvip/nn/layers.hpp"
#include "cordvip/pcgeom.hpp"
#include "cordvip/se3kin.hpp"
#include "../unit/gradcheck.hpp"
#include "../unit/oracles.hpp"

namespace fs = std::filesystem;
using namespace cordvip;
using nn::Tensor;

namespace {

using Clock = std::chrono::steady_clock;

double since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

struct Outcome {
  bool pass = false;
  std::string detail;
};

// Collects failures without stopping at the first one.
struct Tally {
  std::size_t checks = 0;
  std::vector<std::string> failures;

  void expect(bool ok, const std::string& what) {
    ++checks;
    if (!ok && failures.size() < 5) failures.push_back(what);
    if (!ok && failures.size() == 5) failures.push_back("...");
  }
  bool ok() const { return failures.empty(); }
  std::string summary() const {
    std::string s = std::to_string(checks) + " checks";
    for (const auto& f : failures) s += "; " + f;
    return s;
  }
};

// ---------------------------------------------------------------- CLI plumbing

struct Run {
  int code = -1;
  std::string out;
  double seconds = 0.0;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

Run run_cli(const std::string& cli, const std::string& args, const fs::path& log) {
  const std::string cmd = quote(cli) + " " + args + " 2>&1";
  std::cerr << "  $ cordvip " << args << "\n";
  Run r;
  const auto t0 = Clock::now();
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) return r;
  std::array<char, 4096> buf{};
  std::ofstream tee(log, std::ios::app);
  tee << "$ " << args << "\n";
  while (std::fgets(buf.data(), buf.size(), pipe)) {
    r.out += buf.data();
    tee << buf.data();
  }
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.seconds = since(t0);
  return r;
}

// Last "key=value" occurrence in the output.
std::optional<std::string> field(const std::string& out, const std::string& key) {
  const std::string needle = key + "=";
  std::optional<std::string> found;
  std::size_t pos = 0;
  while ((pos = out.find(needle, pos)) != std::string::npos) {
    if (pos == 0 || out[pos - 1] == ' ' || out[pos - 1] == '\n') {
      const std::size_t b = pos + needle.size();
      found = out.substr(b, out.find_first_of(" \n", b) - b);
    }
    pos += needle.size();
  }
  return found;
}

std::optional<double> number(const std::string& out, const std::string& key) {
  const auto f = field(out, key);
  if (!f) return std::nullopt;
  try {
    return std::stod(*f);
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

// Compares every regular file under two directories by name and content.
bool same_tree(const fs::path& a, const fs::path& b, std::string& why) {
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(a)) names.insert(e.path().filename().string());
  std::set<std::string> other;
  for (const auto& e : fs::directory_iterator(b)) other.insert(e.path().filename().string());
  if (names != other) {
    why = "file lists differ";
    return false;
  }
  for (const auto& n : names) {
    if (read_bytes(a / n) != read_bytes(b / n)) {
      why = n + " differs";
      return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------- criteria 1-5

Outcome geometry() {
  Tally t;
  std::mt19937_64 rng(101);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng() % 1000;
    const double scale = trial % 2 ? 0.05 : 3.0;
    const auto ref = oracle::random_cloud(n, rng, scale);
    const auto query = oracle::random_cloud(20, rng, scale);
    const std::size_t k = 1 + rng() % std::min<std::size_t>(n, 16);
    const auto table = knn(query, ref, k);
    for (std::size_t i = 0; i < query.size(); ++i) {
      const auto expect = oracle::knn(query[i], ref, k);
      bool same = std::equal(expect.begin(), expect.end(), table.row(i).begin());
      for (std::size_t j = 0; same && j < k; ++j)
        same = table.sq_distances(i)[j] == squared_distance(query[i], ref[expect[j]]);
      t.expect(same, "knn trial " + std::to_string(trial));
    }
    const std::size_t m = 1 + rng() % std::min<std::size_t>(n, 32);
    const std::size_t start = rng() % n;
    t.expect(farthest_point_sample(ref, m, start) == oracle::fps(ref, m, start), "fps trial " + std::to_string(trial));
  }
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto obj = oracle::random_cloud(50 + rng() % 400, rng, 0.1);
    const auto hand = oracle::random_cloud(50 + rng() % 400, rng, 0.2);
    const auto normals = estimate_normals(obj, 8);
    const double gamma = trial % 5 == 0 ? 0.0 : 1.0;
    const auto got = aligned_distance(obj, normals, hand, gamma);
    const auto expect = oracle::aligned(obj, normals, hand, gamma);
    for (std::size_t i = 0; i < got.size(); ++i) worst = std::max(worst, std::abs(got[i] - expect[i]));
  }
  t.expect(worst < 1e-9, "aligned distance error " + fmt(worst));
  return {t.ok(), t.summary() + ", aligned max err " + fmt(worst)};
}

Outcome contact_law() {
  Tally t;
  const double theta = kDefaultContactTheta;
  const std::vector<double> probe = {0.0, std::log(3.0) / theta};
  const auto c = contact_map(probe, theta);
  t.expect(c[0] == 1.0, "c(0) = " + fmt(c[0]));
  t.expect(std::abs(c[1] - 0.5) < 1e-9, "c(ln3/theta) = " + fmt(c[1]));

  std::mt19937_64 rng(41);
  std::exponential_distribution<double> e(5.0);
  std::vector<double> d(100000);
  for (auto& x : d) x = e(rng);
  std::sort(d.begin(), d.end());
  const auto cs = contact_map(d, theta);
  bool bounded = true, monotone = true;
  for (std::size_t i = 0; i < cs.size(); ++i) {
    bounded = bounded && cs[i] >= 0.0 && cs[i] <= 1.0;
    if (i > 0 && d[i] > d[i - 1]) monotone = monotone && cs[i] <= cs[i - 1];
  }
  t.expect(bounded, "values outside [0, 1]");
  t.expect(monotone, "not monotone");
  return {t.ok(), t.summary() + ", c(ln3/theta)=" + fmt(c[1])};
}

Outcome kinematics(const std::string& cli, const fs::path& work) {
  Tally t;
  const auto chain = make_benchmark_chain(20);
  std::vector<PointSet> samples;
  for (std::size_t i = 0; i < chain.num_links(); ++i) samples.push_back(sample_link_surface(chain.links()[i], 48, 7 + i));
  std::mt19937_64 rng(23);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> q;
    for (const auto& j : chain.joints()) q.push_back(std::uniform_real_distribution<double>(j.lower, j.upper)(rng));
    const JointVector jv(chain, q);
    const auto mats = oracle::matrix_fk(chain, jv.values());
    const auto poses = chain_fk(chain, jv);
    for (std::size_t l = 0; l < poses.size(); ++l) worst = std::max(worst, (poses[l].matrix() - mats[l]).cwiseAbs().maxCoeff());
    // 21 links x 48 samples stays under the cloud size, so the output is the full posed union.
    const auto cloud = fk_pointcloud(chain, jv, samples, std::nullopt, 1024);
    std::size_t at = 0;
    bool sized = cloud.size() == chain.num_links() * 48;
    for (std::size_t l = 0; sized && l < chain.num_links(); ++l)
      for (const auto& p : samples[l]) worst = std::max(worst, (cloud[at++] - oracle::transform(mats[l], p)).norm());
    t.expect(sized, "cloud size " + std::to_string(cloud.size()));
  }
  t.expect(worst < 1e-9, "fk error " + fmt(worst));

  const auto bench = run_cli(cli, "bench-fk --links 20 --points 1024 --seconds 3", work / "bench.log");
  const auto rate = number(bench.out, "calls_per_second");
  t.expect(bench.code == 0 && rate && *rate >= 8.0, "bench-fk rate " + (rate ? fmt(*rate) : std::string("missing")));
  return {t.ok(), t.summary() + ", fk max err " + fmt(worst) + ", bench-fk " + (rate ? fmt(*rate) : "?") + " calls/s"};
}

Tensor<double> probe(const Tensor<double>& y, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> w(y.numel());
  for (auto& x : w) x = n(rng);
  return nn::sum(nn::mul(y, Tensor<double>(y.rows(), y.cols(), std::move(w))));
}

Outcome gradients() {
  using namespace cordvip::nn;
  using testutil::gradcheck;
  using testutil::random_leaf;
  Tally t;
  double worst_prim = 0.0, worst_e2e = 0.0;
  std::mt19937_64 rng(5);
  auto prim = [&](const std::string& name, const std::function<Tensor<double>()>& f, std::vector<Tensor<double>> leaves) {
    const double err = gradcheck(f, std::move(leaves));
    worst_prim = std::max(worst_prim, err);
    t.expect(err < 1e-4, name + " rel err " + fmt(err));
  };
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t r = 1 + rng() % 6, c = 2 + rng() % 6, k = 1 + rng() % 5;
    auto a = random_leaf(r, c, rng), b = random_leaf(r, c, rng);
    auto w = random_leaf(c, k, rng), wt = random_leaf(k, c, rng);
    auto row = random_leaf(1, c, rng), g = random_leaf(1, c, rng), beta = random_leaf(1, c, rng);
    const auto s = rng();
    prim("matmul", [&] { return probe(matmul(a, w), s); }, {a, w});
    prim("matmul_nt", [&] { return probe(matmul_nt(a, wt), s); }, {a, wt});
    prim("add", [&] { return probe(add(a, b), s); }, {a, b});
    prim("add row", [&] { return probe(add(a, row), s); }, {a, row});
    prim("sub", [&] { return probe(sub(a, b), s); }, {a, b});
    prim("mul", [&] { return probe(mul(a, b), s); }, {a, b});
    prim("scale", [&] { return probe(scale(a, 0.37), s); }, {a});
    prim("relu", [&] { return probe(relu(a), s); }, {a});
    prim("sigmoid", [&] { return probe(sigmoid(a), s); }, {a});
    prim("softmax rows", [&] { return probe(softmax(a, 1), s); }, {a});
    prim("softmax cols", [&] { return probe(softmax(a, 0), s); }, {a});
    prim("layer_norm", [&] { return probe(layer_norm(a, g, beta), s); }, {a, g, beta});
    prim("max_pool rows", [&] { return probe(max_pool(a, 0), s); }, {a});
    prim("max_pool cols", [&] { return probe(max_pool(a, 1), s); }, {a});
    prim("mse", [&] { return mse(a, b); }, {a, b});
    prim("concat", [&] { return probe(concat<double>({a, b}, 1), s); }, {a, b});
    prim("slice", [&] { return probe(slice(a, 1, 0, (c + 1) / 2), s); }, {a});
    prim("transpose", [&] { return probe(transpose(a), s); }, {a});
    prim("reshape", [&] { return probe(reshape(a, c, r), s); }, {a});
    prim("repeat_rows", [&] { return probe(repeat_rows(row, r + 1), s); }, {row});

    ParameterSet<double> ps;
    const std::size_t heads = 1 + trial % 3, d = 2 * heads;
    auto lin = Linear<double>::create(ps, "fc", c, d, rng);
    auto attn = CrossAttention<double>::create(ps, "attn", d, heads, rng);
    auto kv = random_leaf(1 + rng() % 5, d, rng);
    std::vector<Tensor<double>> leaves = {a, kv};
    for (const auto& [name, p] : ps.entries()) leaves.push_back(p);
    prim("linear + attention", [&] { return probe(attn(lin(a), kv), s); }, leaves);
  }

  EncoderConfig ec;
  ec.d = 8;
  ec.heads = 2;
  ec.state_dim = 4;
  ec.state_heads = 2;
  ec.head_hidden = 8;
  ec.horizon = 3;
  std::uniform_real_distribution<double> u(-1, 1), unit(0, 1);
  auto data = [&](std::size_t r, std::size_t c, bool grad = false) {
    std::vector<double> v(r * c);
    for (auto& x : v) x = u(rng);
    return Tensor<double>(r, c, std::move(v), grad);
  };
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 8 + 4 * trial;
    CorrEncoder<double> enc(ec, 10 + trial);
    PretrainSample<double> s;
    s.obj_pc = data(n, 3, true);
    s.hand_pc = data(n, 3);
    s.arm_state = data(1, ec.arm_dim);
    s.hand_state = data(1, ec.hand_dim);
    std::vector<double> contact(n);
    for (auto& x : contact) x = unit(rng);
    s.contact = Tensor<double>(n, 1, contact);
    s.arm_seq = data(ec.horizon, ec.arm_dim);
    s.hand_seq = data(ec.horizon, ec.hand_dim);
    std::vector<Tensor<double>> leaves = {s.obj_pc};
    for (const auto& [name, p] : enc.params().entries()) leaves.push_back(p);
    const double err = gradcheck([&] { return enc.pretrain_loss(s).total; }, leaves, 1e-5);
    worst_e2e = std::max(worst_e2e, err);
    t.expect(err < 1e-3, "pretrain_loss rel err " + fmt(err));
  }

  // Policy loss through encoder features of two stacked frames and the denoiser.
  const auto sched = make_schedule(20);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 8 + 2 * trial, frames = 2, B = 2, A = 6 + trial;
    CorrEncoder<double> enc(ec, 30 + trial);
    DenoiserConfig dc;
    dc.action_dim = A;
    dc.cond_dim = frames * ec.feature_dim();
    dc.hidden = 8;
    dc.blocks = 1 + trial % 2;
    dc.embed_dim = 4;
    Denoiser<double> den(dc, 40 + trial);
    std::vector<EncoderInputs<double>> inputs;
    for (std::size_t i = 0; i < B * frames; ++i) inputs.push_back({data(n, 3), data(n, 3), data(1, 3), data(1, 2)});
    const auto a0 = data(B, A);
    const auto eps = data(B, A);
    const std::vector<std::size_t> steps = {1 + trial * 3u, 20 - trial * 2u};
    auto loss = [&] {
      std::vector<Tensor<double>> rows;
      for (std::size_t b = 0; b < B; ++b) {
        std::vector<Tensor<double>> parts;
        for (std::size_t f = 0; f < frames; ++f) parts.push_back(enc.forward(inputs[b * frames + f]).condition());
        rows.push_back(concat(parts, 1));
      }
      const auto cond = concat(rows, 0);
      return diffusion_loss_with<double>(
          [&](const Tensor<double>& a_k, std::span<const std::size_t> k) { return den(a_k, cond, k); }, a0, steps, eps,
          sched);
    };
    std::vector<Tensor<double>> leaves;
    for (const auto& [name, p] : enc.params().entries()) leaves.push_back(p);
    for (const auto& [name, p] : den.params().entries()) leaves.push_back(p);
    const double err = gradcheck(loss, leaves, 1e-5);
    worst_e2e = std::max(worst_e2e, err);
    t.expect(err < 1e-3, "policy loss rel err " + fmt(err));
  }
  return {t.ok(), t.summary() + ", worst primitive " + fmt(worst_prim) + ", worst end-to-end " + fmt(worst_e2e)};
}

Outcome diffusion() {
  Tally t;
  const auto sched = make_schedule(100);
  std::mt19937_64 rng(14);
  std::normal_distribution<double> g;
  auto gaussian = [&](std::size_t n) {
    std::vector<double> v(n);
    for (auto& x : v) x = g(rng);
    return v;
  };

  std::uniform_real_distribution<double> u(-0.95, 0.95);
  std::vector<double> a0(60);
  for (auto& v : a0) v = u(rng);
  const NoisePredictor perfect = [&](std::span<const double> a_k, std::size_t k) {
    const double ab = sched.alpha_bar_at(k);
    std::vector<double> eps(a_k.size());
    for (std::size_t j = 0; j < eps.size(); ++j) eps[j] = (a_k[j] - std::sqrt(ab) * a0[j]) / std::sqrt(1.0 - ab);
    return eps;
  };
  double worst_perfect = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    std::vector<std::size_t> all(100);
    std::iota(all.begin(), all.end(), 1);
    std::shuffle(all.begin(), all.end(), rng);
    std::vector<std::size_t> ts(all.begin(), all.begin() + 1 + trial % 25);
    if (trial == 0) ts = ddim_timesteps(100, 10);
    if (trial == 1) ts = ddim_timesteps(100, 100);
    std::sort(ts.rbegin(), ts.rend());
    const auto x = ddim_trajectory(gaussian(60), perfect, sched, ts).back();
    for (std::size_t j = 0; j < 60; ++j) worst_perfect = std::max(worst_perfect, std::abs(x[j] - a0[j]));
  }
  t.expect(worst_perfect < 1e-6, "perfect denoiser error " + fmt(worst_perfect));

  double worst_marginal = 0.0;
  for (std::size_t k : {5u, 25u, 50u, 75u}) {
    const double ab = sched.alpha_bar_at(k);
    const double x0 = 0.7;
    double sum = 0.0, sq = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
      const double e = g(rng);
      const double x = forward_noise(std::vector<double>{x0}, k, std::vector<double>{e}, sched)[0];
      sum += x;
      sq += x * x;
    }
    const double mean = sum / n, var = sq / n - mean * mean;
    const double mean_err = std::abs(mean - std::sqrt(ab) * x0) / (std::sqrt(ab) * x0);
    const double var_err = std::abs(var - (1.0 - ab)) / (1.0 - ab);
    worst_marginal = std::max({worst_marginal, mean_err, var_err});
  }
  t.expect(worst_marginal < 0.02, "forward-noise marginal rel err " + fmt(worst_marginal));

  // Zero predictor: each step multiplies by sqrt(ab(next) / ab(current)).
  const NoisePredictor zero = [](std::span<const double> a, std::size_t) { return std::vector<double>(a.size(), 0.0); };
  double worst_zero = 0.0;
  for (std::size_t n : {1u, 3u, 10u, 50u, 100u}) {
    const auto ts = ddim_timesteps(100, n);
    const auto x0 = gaussian(16);
    const auto traj = ddim_trajectory(x0, zero, sched, ts);
    std::vector<double> expect = x0;
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t next = i + 1 < n ? ts[i + 1] : 0;
      const double f = std::sqrt(sched.alpha_bar_at(next)) / std::sqrt(sched.alpha_bar_at(ts[i]));
      for (auto& v : expect) v *= f;
      for (std::size_t j = 0; j < 16; ++j)
        worst_zero = std::max(worst_zero, std::abs(traj[i + 1][j] - expect[j]) / std::max(1.0, std::abs(expect[j])));
    }
  }
  t.expect(worst_zero < 1e-9, "zero denoiser error " + fmt(worst_zero));
  return {t.ok(), t.summary() + ", perfect " + fmt(worst_perfect) + ", marginal " + fmt(worst_marginal) + ", zero " +
                      fmt(worst_zero)};
}

// ---------------------------------------------------------------- criteria 6-9

constexpr std::uint64_t kSeed = 1;

struct Pipeline {
  std::string cli;
  fs::path work;
  fs::path log;

  fs::path data() const { return work / "data"; }
  fs::path config() const { return work / "run.json"; }
  fs::path encoder() const { return work / "encoder.ckpt"; }
  fs::path policy(bool pretrained) const { return work / (pretrained ? "policy.ckpt" : "policy_scratch.ckpt"); }
  fs::path report(bool pretrained) const { return work / (pretrained ? "eval.csv" : "eval_scratch.csv"); }

  Run cmd(const std::string& args) const { return run_cli(cli, args, log); }

  std::optional<double> eval_rate[2];
  std::optional<double> eval_success[2];
  bool encoder_ready = false;
};

Outcome pretraining(Pipeline& p) {
  Tally t;
  write_text(p.config(), "{\"seed\": " + std::to_string(kSeed) + "}\n");
  const auto t0 = Clock::now();
  const auto gen = p.cmd("gen-data --env planar-push --episodes 50 --seed " + std::to_string(kSeed) + " --out " +
                         quote(p.data().string()));
  t.expect(gen.code == 0, "gen-data exit " + std::to_string(gen.code));
  const auto pre = p.cmd("pretrain --data " + quote(p.data().string()) + " --config " + quote(p.config().string()) +
                         " --out " + quote(p.encoder().string()));
  const double seconds = since(t0);
  t.expect(pre.code == 0, "pretrain exit " + std::to_string(pre.code));
  p.encoder_ready = pre.code == 0;
  const auto mse0 = number(pre.out, "initial_val_contact_mse");
  const auto mse1 = number(pre.out, "final_val_contact_mse");
  const auto r = number(pre.out, "final_val_pearson");
  const double drop = mse0 && mse1 && *mse0 > 0 ? 1.0 - *mse1 / *mse0 : 0.0;
  t.expect(drop >= 0.5, "contact MSE drop " + fmt(drop));
  t.expect(r && *r > 0.9, "Pearson " + (r ? fmt(*r) : std::string("missing")));
  t.expect(seconds < 15 * 60, "runtime " + fmt(seconds) + " s");
  return {t.ok(), t.summary() + ", val MSE " + (mse0 ? fmt(*mse0) : "?") + " -> " + (mse1 ? fmt(*mse1) : "?") +
                      " (drop " + fmt(100 * drop) + "%), Pearson " + (r ? fmt(*r) : "?") + ", " + fmt(seconds) + " s"};
}

Outcome reproduction(Pipeline& p) {
  Tally t;
  if (!p.encoder_ready) return {false, "no pretrained encoder (criterion 6 did not produce one)"};
  const auto t0 = Clock::now();
  std::string detail;
  for (bool pretrained : {true, false}) {
    std::string args = "train --data " + quote(p.data().string()) + " --config " + quote(p.config().string()) +
                       " --out " + quote(p.policy(pretrained).string());
    if (pretrained) args += " --encoder " + quote(p.encoder().string());
    const auto tr = p.cmd(args);
    t.expect(tr.code == 0, "train exit " + std::to_string(tr.code));
    const auto ev = p.cmd("eval --policy " + quote(p.policy(pretrained).string()) + " --episodes 20 --seed " +
                          std::to_string(kSeed) + " --report " + quote(p.report(pretrained).string()));
    t.expect(ev.code == 0, "eval exit " + std::to_string(ev.code));
    const int arm = pretrained ? 0 : 1;
    p.eval_success[arm] = number(ev.out, "success_rate");
    p.eval_rate[arm] = number(ev.out, "steps_per_second");
    const auto successes = field(ev.out, "successes");
    detail += std::string(pretrained ? "pretrained " : ", no-pretrain ") + (successes ? *successes : "?") + "/20";
  }
  const double seconds = since(t0);
  t.expect(p.eval_success[0] && *p.eval_success[0] >= 0.8,
           "pretrained success " + (p.eval_success[0] ? fmt(*p.eval_success[0]) : std::string("missing")));
  t.expect(seconds < 45 * 60, "runtime " + fmt(seconds) + " s");
  return {t.ok(), t.summary() + ", " + detail + ", " + fmt(seconds) + " s"};
}

Outcome inference_rate(const Pipeline& p) {
  if (!p.eval_rate[0]) return {false, "no eval run (criterion 7 did not complete)"};
  double slowest = *p.eval_rate[0];
  if (p.eval_rate[1]) slowest = std::min(slowest, *p.eval_rate[1]);
  std::string detail = "pretrained " + fmt(*p.eval_rate[0]) + " steps/s";
  if (p.eval_rate[1]) detail += ", no-pretrain " + fmt(*p.eval_rate[1]) + " steps/s";
  return {slowest >= 5.0, detail};
}

Outcome determinism(const Pipeline& p) {
  Tally t;
  const fs::path root = p.work / "rerun";
  fs::remove_all(root);
  fs::create_directories(root);
  const fs::path cfg = root / "small.json";
  write_text(cfg, R"({"seed": 1, "pretrain_epochs": 2, "pretrain_frames": 48, "val_frames": 24,
  "finetune_epochs": 1, "head_epochs": 4, "train_batch": 16})");
  std::string why;
  const std::string seed = std::to_string(kSeed);
  for (int i = 0; i < 2; ++i) {
    const fs::path d = root / ("run" + std::to_string(i));
    fs::create_directories(d);
    t.expect(p.cmd("gen-data --episodes 4 --seed " + seed + " --out " + quote((d / "data").string())).code == 0,
             "gen-data");
    t.expect(p.cmd("pretrain --data " + quote((d / "data").string()) + " --config " + quote(cfg.string()) + " --out " +
                   quote((d / "enc.ckpt").string()))
                     .code == 0,
             "pretrain");
    t.expect(p.cmd("train --data " + quote((d / "data").string()) + " --config " + quote(cfg.string()) +
                   " --encoder " + quote((d / "enc.ckpt").string()) + " --out " + quote((d / "policy.ckpt").string()))
                     .code == 0,
             "train");
    t.expect(p.cmd("eval --policy " + quote((d / "policy.ckpt").string()) + " --episodes 2 --seed " + seed +
                   " --report " + quote((d / "eval.csv").string()))
                     .code == 0,
             "eval");
    fs::remove(d / "eval.csv.timing.csv");  // wall-clock timings are not expected to repeat
  }
  const fs::path a = root / "run0", b = root / "run1";
  const bool same_data = same_tree(a / "data", b / "data", why);
  t.expect(same_data, "gen-data: " + why);
  for (const char* f : {"enc.ckpt", "enc.ckpt.metrics.csv", "policy.ckpt", "policy.ckpt.metrics.csv", "eval.csv"}) {
    const bool present = fs::exists(a / f);
    t.expect(present && read_bytes(a / f) == read_bytes(b / f), std::string(f) + (present ? " differs" : " missing"));
  }
  // The leading episodes of the full dataset come from the same seeds.
  if (fs::exists(p.data())) {
    for (const char* f : {"episode_000.cvip", "episode_003.cvip"})
      t.expect(read_bytes(a / "data" / f) == read_bytes(p.data() / f), std::string("subset ") + f + " differs");
  }
  return {t.ok(), t.summary() + " (gen-data, pretrain, train, eval run twice)"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app("Acceptance criteria");
  std::string cli;
  std::string work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--cli", cli, "Path to the cordvip executable")->required();
  app.add_option("--work", work, "Scratch directory");
  app.add_option("--only", only, "Run only these criteria");
  CLI11_PARSE(app, argc, argv);

  Pipeline pipe;
  pipe.cli = cli;
  pipe.work = fs::absolute(work);
  fs::create_directories(pipe.work);
  pipe.log = pipe.work / "cli.log";
  fs::remove(pipe.log);

  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"geometry oracles", geometry},
      {"contact-map law", contact_law},
      {"FK oracle and throughput", [&] { return kinematics(cli, pipe.work); }},
      {"autodiff gradient checks", gradients},
      {"diffusion identities", diffusion},
      {"pretraining efficacy", [&] { return pretraining(pipe); }},
      {"end-to-end reproduction", [&] { return reproduction(pipe); }},
      {"inference rate", [&] { return inference_rate(pipe); }},
      {"determinism", [&] { return determinism(pipe); }},
  };

  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && std::find(only.begin(), only.end(), id) == only.end()) continue;
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << id << ": " << (o.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << "  ["
              << o.detail << "; " << fmt(since(t0)) << " s]" << std::endl;
  }
  return all ? 0 : 1;
}
