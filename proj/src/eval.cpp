#include "emte/eval.hpp"

#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace emte::eval {

std::uint64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < classes; ++i) t += at(i, i);
  return t;
}

ConfusionMatrix confusion(std::span<const std::size_t> predictions,
                          std::span<const std::size_t> labels, std::size_t classes) {
  if (predictions.size() != labels.size()) {
    throw std::invalid_argument("predictions and labels differ in length");
  }
  ConfusionMatrix cm(classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (predictions[i] >= classes || labels[i] >= classes) {
      throw std::invalid_argument("class index out of range in confusion()");
    }
    ++cm.at(predictions[i], labels[i]);
  }
  return cm;
}

namespace {

double ratio(std::uint64_t num, std::uint64_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

double harmonic(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

}  // namespace

MetricsReport metrics(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.total = cm.total();
  if (cm.classes == 0 || r.total == 0) throw std::invalid_argument("metrics of an empty matrix");
  const double n = static_cast<double>(cm.classes);
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < cm.classes; ++i) {
    ClassMetrics c;
    c.tp = cm.at(i, i);
    for (std::size_t j = 0; j < cm.classes; ++j) {
      if (j == i) continue;
      c.fp += cm.at(i, j);
      c.fn += cm.at(j, i);
    }
    c.tn = r.total - c.tp - c.fp - c.fn;
    if (c.tp + c.fp == 0) c.undefined |= kPrecisionUndefined;
    if (c.tp + c.fn == 0) c.undefined |= kRecallUndefined;
    c.precision = ratio(c.tp, c.tp + c.fp);
    c.recall = ratio(c.tp, c.tp + c.fn);
    c.f1 = harmonic(c.precision, c.recall);
    c.fpr = ratio(c.fp, c.fp + c.tn);
    r.macro.precision += c.precision / n;
    r.macro.recall += c.recall / n;
    r.macro.f1 += c.f1 / n;
    r.macro.fpr += c.fpr / n;
    r.macro.undefined |= c.undefined;
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    tn += c.tn;
    r.per_class.push_back(c);
  }
  r.micro.precision = ratio(tp, tp + fp);
  r.micro.recall = ratio(tp, tp + fn);
  r.micro.f1 = harmonic(r.micro.precision, r.micro.recall);
  r.micro.fpr = ratio(fp, fp + tn);
  r.accuracy = ratio(cm.trace(), r.total);
  return r;
}

std::string percent(double fraction, bool undefined) {
  if (undefined) return "NaN%";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", 100.0 * fraction);
  return buf;
}

RenderedReport render_report(const ConfusionMatrix& cm, const MetricsReport& report) {
  const std::size_t n = cm.classes;
  const double total = static_cast<double>(report.total);
  std::ostringstream text;
  auto cell = [&text](const std::string& s) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%9s", s.c_str());
    text << buf;
  };

  text << "Output Class (rows) vs Target Class (columns)\n";
  cell("");
  for (std::size_t j = 0; j < n; ++j) cell(std::to_string(j + 1));
  cell("PRE");
  text << "\n";
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = report.per_class[i];
    const bool undef = c.undefined & kPrecisionUndefined;
    cell(std::to_string(i + 1));
    for (std::size_t j = 0; j < n; ++j) cell(std::to_string(cm.at(i, j)));
    cell(percent(c.precision, undef));
    text << "\n";
    cell("");
    for (std::size_t j = 0; j < n; ++j) cell(percent(static_cast<double>(cm.at(i, j)) / total));
    cell(percent(1.0 - c.precision, undef));
    text << "\n";
  }
  cell("REC");
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = report.per_class[j];
    cell(percent(c.recall, c.undefined & kRecallUndefined));
  }
  cell(percent(report.accuracy));
  text << "\n";
  cell("");
  for (std::size_t j = 0; j < n; ++j) {
    const auto& c = report.per_class[j];
    cell(percent(1.0 - c.recall, c.undefined & kRecallUndefined));
  }
  cell(percent(1.0 - report.accuracy));
  text << "\n\n";

  char line[256];
  std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s\n", "average", "PRE", "REC", "F1", "FPR");
  text << line;
  for (const auto& [name, avg] : {std::pair{"macro", report.macro}, std::pair{"micro", report.micro}}) {
    std::snprintf(line, sizeof line, "%-8s %8s %8s %8s %8s\n", name,
                  percent(avg.precision).c_str(), percent(avg.recall).c_str(),
                  percent(avg.f1).c_str(), percent(avg.fpr).c_str());
    text << line;
  }
  text << "accuracy " << percent(report.accuracy) << " (" << cm.trace() << "/" << report.total
       << ")\n";

  std::ostringstream csv;
  csv << "class,TP,FP,FN,TN,PRE,REC,F1,FPR,undefined_flag\n";
  auto row = [&csv](const std::string& name, std::uint64_t tp, std::uint64_t fp, std::uint64_t fn,
                    std::uint64_t tn, double pre, double rec, double f1, double fpr, unsigned flag) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s,%llu,%llu,%llu,%llu,%.12g,%.12g,%.12g,%.12g,%u\n",
                  name.c_str(), static_cast<unsigned long long>(tp),
                  static_cast<unsigned long long>(fp), static_cast<unsigned long long>(fn),
                  static_cast<unsigned long long>(tn), pre, rec, f1, fpr, flag);
    csv << buf;
  };
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& c = report.per_class[i];
    row(std::to_string(i + 1), c.tp, c.fp, c.fn, c.tn, c.precision, c.recall, c.f1, c.fpr,
        c.undefined);
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
    tn += c.tn;
  }
  row("macro", tp, fp, fn, tn, report.macro.precision, report.macro.recall, report.macro.f1,
      report.macro.fpr, report.macro.undefined);
  row("micro", tp, fp, fn, tn, report.micro.precision, report.micro.recall, report.micro.f1,
      report.micro.fpr, 0);
  row("ACC", cm.trace(), 0, 0, 0, report.accuracy, report.accuracy, report.accuracy, 0.0, 0);
  return {text.str(), csv.str()};
}

}  // namespace emte::eval
