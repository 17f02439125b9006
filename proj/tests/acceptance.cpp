// Acceptance gate: one PASS/FAIL line per criterion. Optional arguments pick
// criteria by number, e.g. `emte_acceptance 1 2 11`.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <string>

#include "emte/checkpoint.hpp"
#include "emte/dataset.hpp"
#include "emte/eval.hpp"
#include "emte/gradcheck.hpp"
#include "emte/harness.hpp"
#include "emte/nn.hpp"
#include "emte/preprocess.hpp"

namespace fs = std::filesystem;
using namespace emte;
using nn::numeric_gradient;
using nn::relative_error;
using Clock = std::chrono::steady_clock;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string f(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.data()) v = rng.normal();
  return t;
}

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::vector<char> slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

// ---- shared end-to-end state ------------------------------------------------

struct Workspace {
  fs::path root;
  fs::path standard;  // 5 classes x 200, 5 sensors
  fs::path wide;      // same events on all 10 recorders
  std::optional<harness::InputsTable> inputs;
  double inputs_2dw_seconds = 0.0;
};

Workspace& workspace() {
  static Workspace w = [] {
    Workspace ws;
    ws.root = fs::temp_directory_path() / "emte_acceptance";
    fs::remove_all(ws.root);
    gridgen::GeneratorConfig cfg;
    cfg.counts.fill(200);
    cfg.synthesis.noise_sigma = 0.002;
    cfg.layout = gridgen::default_layout(5);
    cfg.output_dir = ws.root / "standard";
    gridgen::build_dataset(cfg, 1);
    ws.standard = cfg.output_dir;
    cfg.layout = gridgen::default_layout(10);
    cfg.output_dir = ws.root / "wide";
    gridgen::build_dataset(cfg, 1);
    ws.wide = cfg.output_dir;
    return ws;
  }();
  return w;
}

harness::ExperimentConfig experiment(const fs::path& dataset, const std::string& out) {
  harness::ExperimentConfig c;
  c.dataset = dataset;
  c.seeds = {1, 2, 3};
  c.preset = "synthetic";
  c.monitor_every = 0;
  c.out = workspace().root / out;
  return c;
}

const harness::InputsTable& input_runs() {
  auto& ws = workspace();
  if (!ws.inputs) {
    auto c = experiment(ws.standard, "inputs_2dw");
    c.models = {models::ModelKind::CNN};
    c.cases = {preprocess::InputCase::Case2_2DW};
    const auto t0 = Clock::now();
    auto table = harness::compare_inputs(c);
    ws.inputs_2dw_seconds = seconds_since(t0);
    c.cases = {preprocess::InputCase::Case1_2D};
    c.out = ws.root / "inputs_2d";
    auto plain = harness::compare_inputs(c);
    table.rows.insert(table.rows.begin(), plain.rows.front());
    ws.inputs = std::move(table);
  }
  return *ws.inputs;
}

double median_for(const harness::InputsTable& t, preprocess::InputCase c) {
  for (const auto& row : t.rows)
    if (row.input_case == c) return row.per_model.front().median;
  throw std::logic_error("case missing from table");
}

// ---- criteria -----------------------------------------------------------------

Outcome metrics_oracle() {
  const auto t0 = Clock::now();
  eval::ConfusionMatrix cm(5);
  const std::uint64_t rows[5][5] = {{785, 0, 3, 0, 1},
                                    {0, 282, 0, 0, 0},
                                    {2, 0, 2215, 8, 1},
                                    {0, 0, 0, 238, 2},
                                    {0, 0, 0, 0, 2214}};
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 5; ++j) cm.at(i, j) = rows[i][j];
  const auto r = eval::metrics(cm);
  const double acc = 100.0 * r.accuracy;
  const double rec4 = 100.0 * r.per_class[3].recall;
  bool ok = std::abs(acc - 99.7) <= 0.05 && std::abs(rec4 - 96.7) <= 0.05 &&
            r.per_class[1].recall == 1.0;

  Rng rng(2024);
  double worst = 0.0;
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.index(7);
    eval::ConfusionMatrix m(n);
    for (auto& v : m.counts) v = rng.index(4) == 0 ? 0 : rng.index(5000);
    m.at(0, 0) += 1;
    const auto got = eval::metrics(m);
    double total = 0;
    for (auto v : m.counts) total += static_cast<double>(v);
    for (std::size_t k = 0; k < n; ++k) {
      double tp = 0, fp = 0, fn = 0;
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
          const double v = static_cast<double>(m.at(i, j));
          if (i == k && j == k) tp += v;
          else if (i == k) fp += v;
          else if (j == k) fn += v;
        }
      const double tn = total - tp - fp - fn;
      const double pre = tp + fp > 0 ? tp / (tp + fp) : 0.0;
      const double rec = tp + fn > 0 ? tp / (tp + fn) : 0.0;
      const double f1 = pre + rec > 0 ? 2 * pre * rec / (pre + rec) : 0.0;
      const double fpr = fp + tn > 0 ? fp / (fp + tn) : 0.0;
      const auto& c = got.per_class[k];
      worst = std::max({worst, std::abs(c.precision - pre), std::abs(c.recall - rec),
                        std::abs(c.f1 - f1), std::abs(c.fpr - fpr)});
    }
  }
  const double secs = seconds_since(t0);
  ok = ok && worst <= 1e-12 && secs < 1.0;
  return {ok, "ACC " + f("%.3f", acc) + "%, class-4 REC " + f("%.3f", rec4) + "%, class-2 REC " +
                  f("%.1f", 100.0 * r.per_class[1].recall) + "%, oracle max |diff| " +
                  f("%.1e", worst) + ", " + f("%.3f", secs) + " s"};
}

Outcome gradient_checks() {
  const auto t0 = Clock::now();
  double worst[4] = {0, 0, 0, 0};
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    Rng rng(seed);
    {
      const Tensor in = random_tensor({2, 4, 6}, rng);
      const nn::ConvLayerParams p{random_tensor({3, 2, 2, 3}, rng), random_tensor({3}, rng)};
      const Tensor g = random_tensor({3, 3, 4}, rng);
      const auto a = nn::conv2d_backward(in, p, g);
      auto lx = [&](const Tensor& x) { return dot(nn::conv2d_forward(x, p).data(), g.data()); };
      auto lk = [&](const Tensor& k) {
        return dot(nn::conv2d_forward(in, nn::ConvLayerParams{k, p.biases}).data(), g.data());
      };
      auto lb = [&](const Tensor& b) {
        return dot(nn::conv2d_forward(in, nn::ConvLayerParams{p.filters, b}).data(), g.data());
      };
      worst[0] = std::max({worst[0],
                           relative_error(a.input.data(), numeric_gradient(lx, in).data()),
                           relative_error(a.filters.data(), numeric_gradient(lk, p.filters).data()),
                           relative_error(a.biases.data(), numeric_gradient(lb, p.biases).data())});
    }
    {
      Tensor in({2, 3, 8});
      for (std::size_t i = 0; i < in.size(); ++i) in[i] = 0.25 * static_cast<double>(i);
      rng.shuffle(in.data());
      const Tensor g = random_tensor({2, 3, 4}, rng);
      const auto pooled = nn::maxpool_forward(in);
      const auto a = nn::maxpool_backward(pooled.argmax, g, in.shape());
      auto l = [&](const Tensor& x) { return dot(nn::maxpool_forward(x).output.data(), g.data()); };
      worst[1] = std::max(worst[1], relative_error(a.data(), numeric_gradient(l, in).data()));
    }
    {
      const Tensor z = random_tensor({7}, rng);
      const nn::DenseLayerParams p{random_tensor({7, 4}, rng), random_tensor({4}, rng)};
      const Tensor g = random_tensor({4}, rng);
      auto grads = nn::zero_grads(p);
      const auto gz = nn::dense_backward(z.data(), p, g.data(), grads);
      auto lz = [&](const Tensor& x) { return dot(nn::dense_forward(x.data(), p), g.data()); };
      auto lw = [&](const Tensor& w) { return dot(nn::dense_forward(z.data(), w, p.biases), g.data()); };
      auto lb = [&](const Tensor& b) { return dot(nn::dense_forward(z.data(), p.weights, b), g.data()); };
      worst[2] = std::max({worst[2], relative_error(gz, numeric_gradient(lz, z).data()),
                           relative_error(grads.weights.data(), numeric_gradient(lw, p.weights).data()),
                           relative_error(grads.biases.data(), numeric_gradient(lb, p.biases).data())});
    }
    {
      const Tensor logits = random_tensor({5}, rng);
      const std::size_t label = rng.index(5);
      const auto r = nn::softmax_xent(logits.data(), label);
      auto l = [&](const Tensor& x) { return nn::softmax_xent(x.data(), label).loss; };
      worst[3] = std::max(worst[3], relative_error(r.grad_logits, numeric_gradient(l, logits).data()));
    }
  }
  const double secs = seconds_since(t0);
  const double w = *std::max_element(worst, worst + 4);
  return {w < 1e-4 && secs < 60.0,
          "max rel err conv " + f("%.1e", worst[0]) + ", pool " + f("%.1e", worst[1]) + ", dense " +
              f("%.1e", worst[2]) + ", softmax-xent " + f("%.1e", worst[3]) + " (5 seeds each), " +
              f("%.2f", secs) + " s"};
}

Outcome dwt_properties() {
  const auto t0 = Clock::now();
  Rng rng(64);
  double energy_err = 0.0, const_detail = 0.0, poly = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(64);
    for (double& v : x) v = rng.normal(0.0, 1.0 + trial);
    const auto d = preprocess::dwt_db4_level1(x);
    const double e = dot(x, x);
    energy_err = std::max(energy_err, std::abs(dot(d.approx, d.approx) + dot(d.detail, d.detail) - e) / e);

    const std::vector<double> c(64, rng.normal(0.0, 10.0));
    for (double v : preprocess::dwt_db4_level1(c).detail) const_detail = std::max(const_detail, std::abs(v));

    const double a0 = rng.normal(), a1 = rng.normal(), a2 = rng.normal(), a3 = rng.normal();
    std::vector<double> p(64);
    double scale = 0.0;
    for (std::size_t n = 0; n < 64; ++n) {
      const double t = static_cast<double>(n);
      p[n] = a0 + a1 * t + a2 * t * t + a3 * t * t * t;
      scale = std::max(scale, std::abs(p[n]));
    }
    const auto dp = preprocess::dwt_db4_level1(p);
    for (std::size_t k = 0; 2 * k + 7 < 64; ++k) poly = std::max(poly, std::abs(dp.detail[k]) / scale);
  }
  const double secs = seconds_since(t0);
  return {energy_err <= 1e-9 && const_detail <= 1e-12 && poly < 1e-8 && secs < 5.0,
          "energy rel err " + f("%.1e", energy_err) + ", constant details " + f("%.1e", const_detail) +
              ", cubic interior " + f("%.1e", poly) + " of scale, " + f("%.3f", secs) + " s"};
}

Outcome modal_roundtrip() {
  Rng rng(4);
  double worst = 0.0, mode0 = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t s = 16 + rng.index(700);
    std::vector<double> ph(3 * s);
    for (double& v : ph) v = rng.normal(0.0, 2.0);
    const auto back = preprocess::inverse_modal_transform(preprocess::modal_transform(ph));
    double scale = 0.0, err = 0.0;
    for (std::size_t i = 0; i < ph.size(); ++i) {
      scale = std::max(scale, std::abs(ph[i]));
      err = std::max(err, std::abs(back[i] - ph[i]));
    }
    worst = std::max(worst, err / scale);
    for (std::size_t n = 0; n < s; ++n) ph[2 * s + n] = -ph[n] - ph[s + n];
    const auto m = preprocess::modal_transform(ph);
    for (std::size_t n = 0; n < s; ++n)
      mode0 = std::max(mode0, std::abs(m[preprocess::kMode0 * s + n]) / scale);
  }
  const double eps = std::numeric_limits<double>::epsilon();
  return {worst <= 1e-12 && mode0 <= 8 * eps,
          "roundtrip rel err " + f("%.1e", worst) + ", zero-sum mode 0 " + f("%.1e", mode0) +
              " of scale (eps " + f("%.1e", eps) + ")"};
}

Outcome grayscale_properties() {
  const auto t0 = Clock::now();
  Rng rng(1000);
  std::size_t failures = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 2 + rng.index(300);
    std::vector<double> x(n);
    for (double& v : x) v = rng.normal(0.0, 1.0 + 10.0 * rng.uniform());
    const auto e = preprocess::encode_grayscale(x, 1, n);
    const double a = 0.01 + 10.0 * rng.uniform(), b = rng.normal(0.0, 50.0);
    std::vector<double> y(n);
    for (std::size_t i = 0; i < n; ++i) y[i] = a * x[i] + b;
    const auto ey = preprocess::encode_grayscale(y, 1, n);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    bool ok = e[static_cast<std::size_t>(lo - x.begin())] == 0.0 &&
              e[static_cast<std::size_t>(hi - x.begin())] == 1.0;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&x](auto i, auto j) { return x[i] < x[j]; });
    for (std::size_t i = 0; i < n; ++i) {
      ok = ok && e[i] >= 0.0 && e[i] <= 1.0 && std::abs(ey[i] - e[i]) < 1e-9;
      if (i) ok = ok && e[order[i - 1]] <= e[order[i]];
    }
    const std::vector<double> flat(n, x[0]);
    for (double v : preprocess::encode_grayscale(flat, 1, n)) ok = ok && v == 0.0;
    failures += !ok;
  }
  const double secs = seconds_since(t0);
  return {failures == 0 && secs < 5.0,
          std::to_string(failures) + " of 1000 rows violate affine invariance, monotonicity, "
          "endpoints or constant-row zeros, " + f("%.3f", secs) + " s"};
}

Outcome end_to_end() {
  const auto& t = input_runs();
  const auto& row = t.rows.back();
  const auto& s = row.per_model.front();
  const double mins = workspace().inputs_2dw_seconds / 60.0;
  std::string vals;
  for (double v : s.values) vals += f("%.2f ", v);
  return {s.median >= 90.0 && mins < 15.0,
          "CNN 2D+W held-out median " + f("%.2f", s.median) + "% (seeds 1,2,3: " + vals + "), " +
              f("%.1f", mins) + " min"};
}

Outcome inputs_ordinal() {
  const auto& t = input_runs();
  const double w = median_for(t, preprocess::InputCase::Case2_2DW);
  const double p = median_for(t, preprocess::InputCase::Case1_2D);
  return {w >= p, "median 2D+W " + f("%.2f", w) + "% vs 2D " + f("%.2f", p) + "%"};
}

Outcome methods_ordinal() {
  const double cnn = median_for(input_runs(), preprocess::InputCase::Case2_2DW);
  auto c = experiment(workspace().standard, "methods");
  c.models = {models::ModelKind::TMLP, models::ModelKind::PCA_SVM, models::ModelKind::Autoencoder};
  const auto t = harness::compare_methods(c);
  bool ok = true;
  std::string detail = "CNN " + f("%.2f", cnn) + "%";
  for (const auto& row : t.rows) {
    const double m = row.metrics[0];
    ok = ok && cnn >= m;
    detail += ", " + std::string(models::kind_label(row.kind)) + " " + f("%.2f", m) + "%";
  }
  return {ok, detail};
}

Outcome sensor_trend() {
  auto c = experiment(workspace().wide, "sensors");
  c.sensor_counts = {2, 5, 10};
  const auto t = harness::sweep_sensors(c);
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (i) ok = ok && t.rows[i].accuracy.median >= t.rows[i - 1].accuracy.median - 1.0;
    detail += (i ? ", " : "") + t.rows[i].label + " sensors " + f("%.2f", t.rows[i].accuracy.median) + "%";
  }
  return {ok, detail + " (median over seeds 1,2,3, 1 pt slack)"};
}

Outcome determinism() {
  const auto& ws = workspace();
  const auto ds = gridgen::load_dataset(ws.standard);
  const auto images = harness::build_images(ds.records, preprocess::InputCase::Case2_2DW);
  std::vector<std::vector<char>> artifacts[2];
  for (int run = 0; run < 2; ++run) {
    const auto r = harness::run_once(images, {models::ModelKind::CNN, 1, "synthetic", 0.8, 0});
    const fs::path dir = ws.root / ("determinism_" + std::to_string(run));
    models::save_model(r.model, dir / "model.json");
    const auto rendered = eval::render_report(r.confusion, r.metrics);
    harness::write_text_file(dir / "report.txt", rendered.text);
    harness::write_text_file(dir / "report.csv", rendered.csv);
    for (const char* name : {"model.json", "model.json.bin", "report.txt", "report.csv"})
      artifacts[run].push_back(slurp(dir / name));
  }
  const bool same = artifacts[0] == artifacts[1];
  const auto bytes = artifacts[0][1].size();
  return {same, std::string(same ? "identical" : "different") + " checkpoint (" +
                   std::to_string(bytes) + " blob bytes) and report files across two seed-1 runs"};
}

Outcome energy_ordering() {
  const auto layout = std::make_shared<const gridgen::SensorLayout>(gridgen::default_layout(5));
  std::array<double, 5> med{};
  for (gridgen::EventClass c : gridgen::kAllClasses) {
    std::vector<double> e;
    for (std::uint64_t i = 0; i < 100; ++i) {
      const std::uint64_t seed = 5000 + 100 * gridgen::class_index(c) + i;
      Rng rng(seed);
      const auto p = gridgen::sample_params(c, gridgen::ParamGrids::defaults(), rng);
      e.push_back(preprocess::record_wavelet_energy(gridgen::synthesize_event(p, layout, seed)));
    }
    std::sort(e.begin(), e.end());
    med[gridgen::class_index(c)] = 0.5 * (e[49] + e[50]);
  }
  const std::array<double, 4> others = {med[0], med[1], med[2], med[4]};
  const auto [lo, hi] = std::minmax_element(others.begin(), others.end());
  const bool ok = med[3] > 5.0 * *hi && *hi / *lo <= 3.0;
  std::string detail = "medians (100 events/class)";
  for (std::size_t k = 0; k < 5; ++k) detail += " " + f("%.4f", med[k]);
  detail += "; lightning/max other " + f("%.1f", med[3] / *hi) + "x, non-lightning spread " +
            f("%.2f", *hi / *lo) + "x";
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
      {"metrics oracle and confusion figures", metrics_oracle},
      {"gradient verification", gradient_checks},
      {"DWT properties", dwt_properties},
      {"modal round trip", modal_roundtrip},
      {"grayscale encoding properties", grayscale_properties},
      {"end-to-end classification", end_to_end},
      {"input-case ordering (2D+W >= 2D)", inputs_ordinal},
      {"method ordering (CNN >= baselines)", methods_ordinal},
      {"sensor-count trend", sensor_trend},
      {"determinism", determinism},
      {"wavelet energy observation", energy_ordering}};

  std::set<std::size_t> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(static_cast<std::size_t>(std::stoul(argv[i])));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!wanted.empty() && !wanted.contains(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("%s  [%2zu] %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  if (wanted.empty() || wanted.size() > 5) fs::remove_all(fs::temp_directory_path() / "emte_acceptance");
  return failed == 0 ? 0 : 1;
}
