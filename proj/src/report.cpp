#include "sasg/report.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

namespace sasg {

namespace {

using nlohmann::json;

std::string num(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

double as_double(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

std::vector<double> as_doubles(const json& j) {
  std::vector<double> out;
  for (const auto& e : j) out.push_back(as_double(e));
  return out;
}

class Csv {
 public:
  explicit Csv(std::vector<std::string> header) : cols_(header.size()) { row(header); }

  void row(const std::vector<std::string>& cells) {
    if (cells.size() != cols_) throw StageError("report", "CSV row width mismatch");
    for (std::size_t i = 0; i < cells.size(); ++i) body_ += (i ? "," : "") + cells[i];
    body_ += "\n";
    ++rows_;
  }

  std::size_t data_rows() const { return rows_ - 1; }

  void save(const std::filesystem::path& path, std::vector<std::filesystem::path>& written) const {
    if (data_rows() == 0) return;
    write(path, body_);
    written.push_back(path);
  }

  static void write(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) throw StageError("report", "cannot write " + path.string());
  }

 private:
  std::size_t cols_;
  std::size_t rows_ = 0;
  std::string body_;
};

const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

/// Minimal SVG canvas with one plotting rectangle per panel.
class Svg {
 public:
  Svg(int width, int height) : w_(width), h_(height) {}

  struct Panel {
    double x0, y0, w, h;  // pixel box
    double lo_x, hi_x, lo_y, hi_y;
    double px(double x) const { return x0 + (hi_x > lo_x ? (x - lo_x) / (hi_x - lo_x) : 0.5) * w; }
    double py(double y) const { return y0 + h - (hi_y > lo_y ? (y - lo_y) / (hi_y - lo_y) : 0.5) * h; }
  };

  Panel panel(double x0, double y0, double w, double h, double lo_x, double hi_x, double lo_y, double hi_y,
              const std::string& title) {
    Panel p{x0, y0, w, h, lo_x, hi_x, lo_y, hi_y};
    rect(x0, y0, w, h);
    text(x0 + w / 2, y0 - 8, title, "middle", 13);
    text(x0 - 6, y0 + h, num_short(lo_y), "end", 10);
    text(x0 - 6, y0 + 10, num_short(hi_y), "end", 10);
    text(x0, y0 + h + 14, num_short(lo_x), "start", 10);
    text(x0 + w, y0 + h + 14, num_short(hi_x), "end", 10);
    return p;
  }

  void rect(double x, double y, double w, double h, const std::string& stroke = "#333", const std::string& fill = "none") {
    out_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w << "\" height=\"" << h << "\" stroke=\""
         << stroke << "\" fill=\"" << fill << "\"/>\n";
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color, double width = 1.0) {
    out_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2 << "\" y2=\"" << y2 << "\" stroke=\"" << color
         << "\" stroke-width=\"" << width << "\"/>\n";
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, const std::string& color, bool dashed = false) {
    out_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\""
         << (dashed ? " stroke-dasharray=\"4 3\"" : "") << " points=\"";
    for (const auto& [x, y] : pts) out_ << x << "," << y << " ";
    out_ << "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color, double opacity = 0.6) {
    out_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r << "\" fill=\"" << color << "\" fill-opacity=\""
         << opacity << "\"/>\n";
  }

  void text(double x, double y, const std::string& s, const char* anchor = "start", int size = 11) {
    out_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size << "\" text-anchor=\"" << anchor
         << "\" font-family=\"sans-serif\">" << s << "</text>\n";
  }

  void save(const std::filesystem::path& path, std::vector<std::filesystem::path>& written) const {
    std::ostringstream doc;
    doc << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w_ << "\" height=\"" << h_ << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
        << out_.str() << "</svg>\n";
    Csv::write(path, doc.str());
    written.push_back(path);
  }

 private:
  static std::string num_short(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
  }

  int w_, h_;
  std::ostringstream out_;
};

json read_results(const std::filesystem::path& bundle) {
  std::ifstream in(bundle / "results.json");
  if (!in) throw StageError("report", "no results.json in " + bundle.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw StageError("report", std::string("results.json: ") + e.what());
  }
}

std::vector<std::string> arm_row(const json& a, const json& r) {
  const auto& d = a["downstream"];
  std::vector<std::string> row{r["seed"].dump(),
                               r["config_hash"].get<std::string>(),
                               a["arm"].get<std::string>(),
                               num(as_double(a["ratio"])),
                               a["generated"].dump(),
                               a["train_size"].dump(),
                               num(as_double(d["accuracy"])),
                               num(as_double(d["precision"])),
                               num(as_double(d["recall"])),
                               num(as_double(d["f1"]))};
  if (a.contains("generation")) {
    const auto& g = a["generation"];
    for (const char* k : {"fid", "fid_train", "cas", "avg_knn", "lof_median", "rarity_mean", "avg_knn_within", "lof_median_within"})
      row.push_back(num(as_double(g[k])));
  } else {
    row.insert(row.end(), 8, "");
  }
  return row;
}

const std::vector<std::string> kArmHeader{"seed",        "config_hash", "arm",        "ratio",          "generated",
                                          "train_size",  "accuracy",    "precision",  "recall",         "f1",
                                          "fid",         "fid_train",   "cas",         "avg_knn",    "lof_median",     "rarity_mean",
                                          "avg_knn_within", "lof_median_within"};

void box(Svg& svg, const Svg::Panel& p, double x, double half_w, std::vector<double> v, const std::string& color) {
  std::erase_if(v, [](double x) { return !std::isfinite(x); });
  if (v.empty()) return;
  std::sort(v.begin(), v.end());
  auto q = [&](double f) {
    const double pos = f * static_cast<double>(v.size() - 1);
    const auto i = static_cast<std::size_t>(pos);
    const double t = pos - static_cast<double>(i);
    return i + 1 < v.size() ? v[i] * (1 - t) + v[i + 1] * t : v[i];
  };
  const double cx = p.px(x);
  svg.line(cx, p.py(v.front()), cx, p.py(v.back()), color);
  svg.rect(cx - half_w, p.py(q(0.75)), 2 * half_w, p.py(q(0.25)) - p.py(q(0.75)), color, "#ffffff");
  svg.line(cx - half_w, p.py(q(0.5)), cx + half_w, p.py(q(0.5)), color, 2.0);
}

}  // namespace

std::vector<std::filesystem::path> write_report(const std::filesystem::path& bundle,
                                                const std::filesystem::path& out_dir) {
  const json r = read_results(bundle);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (!std::filesystem::is_directory(out_dir)) throw StageError("report", "cannot create " + out_dir.string());
  {
    const auto probe = out_dir / ".write_probe";
    std::ofstream t(probe);
    if (!t) throw StageError("report", "output directory is not writable: " + out_dir.string());
    t.close();
    std::filesystem::remove(probe, ec);
  }
  std::vector<std::filesystem::path> written;
  const std::string seed = r["seed"].dump();
  const std::string hash = r["config_hash"].get<std::string>();

  Csv metrics(kArmHeader);
  for (const auto& a : r["arms"]) metrics.row(arm_row(a, r));
  metrics.save(out_dir / "metrics.csv", written);
  Csv sweep(kArmHeader);
  for (const auto& a : r["sweep"]) sweep.row(arm_row(a, r));
  sweep.save(out_dir / "sweep.csv", written);

  // Training curves.
  Csv curves({"seed", "config_hash", "arm", "epoch", "loss", "train_accuracy", "test_accuracy"});
  {
    Svg svg(720, 360);
    const int epochs = r["epochs"].get<int>();
    const auto p0 = svg.panel(60, 40, 280, 260, 1, epochs, 0, 1, "train accuracy");
    const auto p1 = svg.panel(410, 40, 280, 260, 1, epochs, 0, 1, "test accuracy");
    int ci = 0;
    for (const auto& a : r["arms"]) {
      const std::string color = kPalette[ci % 8];
      std::vector<std::pair<double, double>> tr, te;
      for (const auto& e : a["curve"]) {
        const double ep = as_double(e["epoch"]);
        curves.row({seed, hash, a["arm"].get<std::string>(), e["epoch"].dump(), num(as_double(e["loss"])),
                    num(as_double(e["train_accuracy"])), num(as_double(e["test_accuracy"]))});
        tr.emplace_back(p0.px(ep), p0.py(as_double(e["train_accuracy"])));
        if (!e["test_accuracy"].is_null()) te.emplace_back(p1.px(ep), p1.py(as_double(e["test_accuracy"])));
      }
      svg.polyline(tr, color);
      svg.polyline(te, color);
      svg.circle(70 + 120 * ci, 340, 4, color, 1.0);
      svg.text(78 + 120 * ci, 344, a["arm"].get<std::string>());
      ++ci;
    }
    curves.save(out_dir / "curves.csv", written);
    svg.save(out_dir / "curves.svg", written);
  }

  // Generated windows and evaluation features for sparsity labels and PCA.
  const EncoderModel eval = load_encoder(bundle / "models/encoder_evaluation.bin");
  const WindowedDataset train = load_dataset(bundle / "data/train.bin");
  const MatrixXd real = feature_matrix(extract_features(eval, train.windows));
  std::vector<std::pair<std::string, WindowedDataset>> generated;
  for (const auto& a : r["arms"]) {
    const std::string file = a["generated_file"].get<std::string>();
    if (!file.empty()) generated.emplace_back(a["arm"].get<std::string>(), load_dataset(bundle / file));
  }

  Csv sparsity({"seed", "config_hash", "arm", "class", "count", "avg_knn", "lof", "rarity"});
  Csv samples({"seed", "config_hash", "arm", "index", "class", "avg_knn", "lof", "rarity"});
  std::vector<std::pair<std::string, std::array<std::vector<double>, 3>>> dist;
  for (const auto& a : r["arms"]) {
    if (!a.contains("generation")) continue;
    const std::string name = a["arm"].get<std::string>();
    const auto& g = a["generation"];
    for (const auto& c : g["per_class"])
      sparsity.row({seed, hash, name, c["class"].dump(), c["count"].dump(), num(as_double(c["avg_knn"])),
                    num(as_double(c["lof_median"])), num(as_double(c["rarity_mean"]))});
    sparsity.row({seed, hash, name, "all", a["generated"].dump(), num(as_double(g["avg_knn"])),
                  num(as_double(g["lof_median"])), num(as_double(g["rarity_mean"]))});
    const WindowedDataset* gen = nullptr;
    for (const auto& [n, d] : generated)
      if (n == name) gen = &d;
    std::array<std::vector<double>, 3> v{as_doubles(g["knn_samples"]),
                                         as_doubles(g["lof_samples"]),
                                         as_doubles(g["rarity_samples"])};
    for (std::size_t i = 0; i < v[0].size(); ++i)
      samples.row({seed, hash, name, std::to_string(i),
                   gen && i < gen->size() ? std::to_string(gen->windows[i].gesture_label) : "", num(v[0][i]),
                   num(v[1][i]), num(v[2][i])});
    dist.emplace_back(name, std::move(v));
  }
  sparsity.save(out_dir / "sparsity.csv", written);
  samples.save(out_dir / "sparsity_samples.csv", written);
  if (!dist.empty()) {
    Svg svg(900, 340);
    const char* titles[] = {"avg_knn", "lof", "rarity"};
    for (int m = 0; m < 3; ++m) {
      double lo = 1e300, hi = -1e300;
      for (const auto& [n, v] : dist)
        for (double x : v[static_cast<std::size_t>(m)])
          if (std::isfinite(x)) lo = std::min(lo, x), hi = std::max(hi, x);
      if (lo > hi) lo = 0, hi = 1;
      const auto p = svg.panel(60 + 290.0 * m, 40, 230, 240, 0, static_cast<double>(dist.size() + 1), lo, hi, titles[m]);
      for (std::size_t i = 0; i < dist.size(); ++i) {
        box(svg, p, static_cast<double>(i + 1), 12, dist[i].second[static_cast<std::size_t>(m)], kPalette[(i + 1) % 8]);
        svg.text(p.px(static_cast<double>(i + 1)), 300, dist[i].first, "middle", 10);
      }
    }
    svg.save(out_dir / "sparsity.svg", written);
  }

  // PCA fitted on real train features.
  {
    const Pca2 pca = Pca2::fit(real);
    Csv pcsv({"seed", "config_hash", "source", "class", "pc1", "pc2"});
    std::vector<std::pair<std::string, MatrixXd>> proj{{"real", pca.project(real)}};
    std::vector<std::vector<int>> labels{train.labels()};
    for (const auto& [n, d] : generated) {
      proj.emplace_back(n, pca.project(feature_matrix(extract_features(eval, d.windows))));
      labels.push_back(d.labels());
    }
    double lo_x = 1e300, hi_x = -1e300, lo_y = 1e300, hi_y = -1e300;
    for (std::size_t s = 0; s < proj.size(); ++s) {
      const MatrixXd& m = proj[s].second;
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        pcsv.row({seed, hash, proj[s].first, std::to_string(labels[s][static_cast<std::size_t>(i)]), num(m(i, 0)),
                  num(m(i, 1))});
        lo_x = std::min(lo_x, m(i, 0)), hi_x = std::max(hi_x, m(i, 0));
        lo_y = std::min(lo_y, m(i, 1)), hi_y = std::max(hi_y, m(i, 1));
      }
    }
    pcsv.save(out_dir / "pca.csv", written);
    const std::size_t panels = std::max<std::size_t>(proj.size() - 1, 1);
    Svg svg(static_cast<int>(40 + 260 * panels), 320);
    for (std::size_t s = 0; s < panels; ++s) {
      const std::string title = proj.size() > 1 ? "real vs " + proj[s + 1].first : "real";
      const auto p = svg.panel(40 + 260.0 * s, 40, 220, 220, lo_x, hi_x, lo_y, hi_y, title);
      auto draw = [&](std::size_t src, double r, double op) {
        const MatrixXd& m = proj[src].second;
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          svg.circle(p.px(m(i, 0)), p.py(m(i, 1)), r, kPalette[labels[src][static_cast<std::size_t>(i)] % 8], op);
      };
      draw(0, 2.0, 0.25);
      if (proj.size() > 1) draw(s + 1, 3.0, 0.8);
    }
    svg.text(40, 300, "faint: real train features; solid: generated; colour: class");
    svg.save(out_dir / "pca.svg", written);
  }

  // Diffusion loss traces as persisted by the run.
  {
    std::ifstream in(bundle / "loss_trace.csv");
    std::string header, line;
    std::getline(in, header);
    Csv loss({"seed", "config_hash", "model", "iteration", "loss"});
    while (std::getline(in, line)) {
      std::vector<std::string> cells{seed, hash};
      std::stringstream ss(line);
      for (std::string c; std::getline(ss, c, ',');) cells.push_back(c);
      if (cells.size() == 5) loss.row(cells);
    }
    loss.save(out_dir / "loss_trace.csv", written);
  }
  return written;
}

void write_ablation_table(const std::vector<ExperimentResult>& runs, const std::filesystem::path& path) {
  Csv table({"seed", "config_hash", "arm", "ratio", "generated", "accuracy", "f1", "fid", "cas", "avg_knn",
             "lof_median", "rarity_mean"});
  for (const auto& run : runs)
    for (const auto& a : run.arms) {
      std::vector<std::string> row{std::to_string(run.seed), run.config_hash,          arm_name(a.arm),
                                   num(a.ratio),             std::to_string(a.generated), num(a.downstream.accuracy),
                                   num(a.downstream.f1)};
      if (a.generation) {
        for (double v : {a.generation->fid, a.generation->cas, a.generation->avg_knn, a.generation->lof_median,
                         a.generation->rarity_mean})
          row.push_back(num(v));
      } else {
        row.insert(row.end(), 5, "");
      }
      table.row(row);
    }
  if (table.data_rows() == 0) throw StageError("report", "ablation table has no rows");
  std::vector<std::filesystem::path> written;
  table.save(path, written);
}

void write_sweep_table(const std::vector<ExperimentResult>& runs, const std::filesystem::path& path) {
  Csv table({"seed", "config_hash", "ratio", "generated", "train_size", "accuracy", "f1"});
  for (const auto& run : runs)
    for (const auto& a : run.sweep)
      table.row({std::to_string(run.seed), run.config_hash, num(a.ratio), std::to_string(a.generated),
                 std::to_string(a.train_size), num(a.downstream.accuracy), num(a.downstream.f1)});
  std::vector<std::filesystem::path> written;
  table.save(path, written);
}

}  // namespace sasg
