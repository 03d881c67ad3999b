#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "vwam/harness/harness.hpp"
#include "vwam/util/text.hpp"

namespace vwam::harness {

namespace {

std::string num(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string matrix_text(const SelectivityMatrix& m, const std::string& title) {
  std::ostringstream os;
  os << title << " (rows: responding ROI, columns: images optimized for ROI)\n";
  os << "        ";
  for (const auto& r : m.rois) os << " " << std::string(std::max<int>(0, 10 - int(r.size())), ' ') << r;
  os << "   winner\n";
  const auto w = m.winners();
  for (std::size_t i = 0; i < m.rois.size(); ++i) {
    os << std::string(std::max<int>(0, 8 - int(m.rois[i].size())), ' ') << m.rois[i];
    for (std::size_t j = 0; j < m.rois.size(); ++j) {
      const std::string cell = fixed(m.mean(Eigen::Index(i), Eigen::Index(j)), 3);
      os << " " << std::string(std::max<int>(0, 10 - int(cell.size())), ' ') << cell;
    }
    os << "   " << (w[i] ? "yes" : "no") << "\n";
  }
  os << "diagonal wins: " << m.wins() << "/" << m.rois.size() << "\n";
  return os.str();
}

std::string winners_csv(const SelectivityMatrix& m) {
  std::string out = "roi,winner\n";
  const auto w = m.winners();
  for (std::size_t i = 0; i < m.rois.size(); ++i) out += m.rois[i] + "," + (w[i] ? "1" : "0") + "\n";
  return out;
}

}  // namespace

std::string selectivity_csv(const SelectivityMatrix& m) {
  std::string out = "roi,target,mean,spread\n";
  for (std::size_t i = 0; i < m.rois.size(); ++i) {
    for (std::size_t j = 0; j < m.rois.size(); ++j) {
      out += m.rois[i] + "," + m.rois[j] + "," + num(m.mean(Eigen::Index(i), Eigen::Index(j))) + "," +
             num(m.spread(Eigen::Index(i), Eigen::Index(j))) + "\n";
    }
  }
  return out;
}

SelectivityMatrix parse_selectivity_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || util::trim(line) != "roi,target,mean,spread") {
    throw FormatError("selectivity CSV: missing header");
  }
  struct Cell {
    std::string roi, target;
    double mean, spread;
  };
  std::vector<Cell> cells;
  std::vector<std::string> rois;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (util::trim(line).empty()) continue;
    const auto f = util::split(line, ',');
    if (f.size() != 4) throw FormatError("selectivity CSV line " + std::to_string(row) + ": expected 4 fields");
    Cell c{util::trim(f[0]), util::trim(f[1]), 0, 0};
    try {
      c.mean = util::parse_double(f[2], "mean");
      c.spread = util::parse_double(f[3], "spread");
    } catch (const ConfigError& e) {
      throw FormatError("selectivity CSV line " + std::to_string(row) + ": " + e.what());
    }
    if (std::find(rois.begin(), rois.end(), c.roi) == rois.end()) rois.push_back(c.roi);
    cells.push_back(std::move(c));
  }
  const auto n = Eigen::Index(rois.size());
  if (cells.size() != rois.size() * rois.size()) throw FormatError("selectivity CSV: matrix is not square");
  SelectivityMatrix m{rois, Matrix::Constant(n, n, std::nan("")), Matrix::Zero(n, n)};
  auto index = [&](const std::string& r) {
    const auto it = std::find(rois.begin(), rois.end(), r);
    if (it == rois.end()) throw FormatError("selectivity CSV: unknown target ROI " + r);
    return Eigen::Index(it - rois.begin());
  };
  for (const auto& c : cells) {
    const auto i = index(c.roi), j = index(c.target);
    if (!std::isnan(m.mean(i, j))) throw FormatError("selectivity CSV: duplicate cell " + c.roi + "/" + c.target);
    m.mean(i, j) = c.mean;
    m.spread(i, j) = c.spread;
  }
  return m;
}

Report report(const ExperimentResult& r) {
  Report rep;
  std::ostringstream os;
  os << "voxel-weighted activation maximization: closed-loop simulation\n\n";
  os << "master seed " << r.config.seed << ", runtime " << fixed(r.seconds, 1) << " s\n";
  os << "noise sigma " << fixed(r.sigma, 4)
     << (r.config.calibrate ? " (calibrated to median noise ceiling " + fixed(r.calibration.median_r_bar, 3) + ")" : "")
     << "\nmax |cosine| between ROI prototypes " << fixed(r.max_prototype_cosine, 4) << "\n\n";

  if (!r.calibration.table.empty()) {
    std::string csv = "sigma,median_r_bar\n";
    os << "calibration\n     sigma  median r_bar\n";
    for (const auto& row : r.calibration.table) {
      os << "  " << fixed(row.sigma, 4) << "  " << fixed(row.median_r_bar, 4) << "\n";
      csv += num(row.sigma) + "," + num(row.median_r_bar) + "\n";
    }
    csv += num(r.calibration.sigma) + "," + num(r.calibration.median_r_bar) + "\n";
    rep.files["calibration.csv"] = csv;
    os << "\n";
  }

  {
    std::string csv = "roi,voxels,median_raw_r,median_corrected_r,median_r_bar\n";
    os << "prediction accuracy on held-out stimuli (medians over voxels)\n"
       << "  roi      voxels     raw r   corrected r   r_bar\n";
    for (const auto& a : r.accuracy.rois) {
      char line[160];
      std::snprintf(line, sizeof line, "  %-8s %6zu %9.4f %13.4f %7.4f\n", a.roi.c_str(), a.voxels, a.raw, a.corrected,
                    a.r_bar);
      os << line;
      csv += a.roi + "," + std::to_string(a.voxels) + "," + num(a.raw) + "," + num(a.corrected) + "," + num(a.r_bar) +
             "\n";
    }
    os << "  all voxels: raw " << fixed(r.accuracy.median_raw) << ", corrected " << fixed(r.accuracy.median_corrected)
       << "\n\n";
    rep.files["accuracy.csv"] = csv;
    std::string vcsv = "voxel,raw_r,corrected_r,r_bar\n";
    for (Eigen::Index v = 0; v < r.accuracy.voxels.raw.size(); ++v) {
      vcsv += std::to_string(v) + "," + num(r.accuracy.voxels.raw(v)) + "," + num(r.accuracy.voxels.corrected(v)) +
              "," + num(r.accuracy.r_bar(v)) + "\n";
    }
    rep.files["voxel_accuracy.csv"] = vcsv;
  }

  if (!r.traces.empty()) {
    std::string csv = "target,image,seed,first_s,tail_mean_s,final_s,seconds\n";
    for (const auto& t : r.traces) {
      csv += t.target + "," + std::to_string(t.image) + "," + std::to_string(t.seed) + "," + num(t.first) + "," +
             num(t.tail_mean) + "," + num(t.final_s) + "," + num(t.seconds) + "\n";
    }
    rep.files["traces.csv"] = csv;
    std::size_t improved = 0;
    for (const auto& t : r.traces) improved += t.tail_mean > t.first;
    os << "synthesis: " << r.traces.size() << " images, " << improved
       << " with mean s over the last 10% above the first iteration\n\n";
  }

  const std::pair<const std::optional<SelectivityMatrix>*, const char*> tables[] = {
      {&r.truth, "truth"}, {&r.cross, "cross"}, {&r.fitted, "fitted"}};
  const std::map<std::string, std::string> titles{{"truth", "ground-truth brain A"},
                                                  {"cross", "ground-truth brain B (cross-subject)"},
                                                  {"fitted", "fitted encoding model"}};
  for (const auto& [m, name] : tables) {
    if (!*m) continue;
    os << matrix_text(**m, "selectivity, " + titles.at(name)) << "\n";
    rep.files[std::string("selectivity_") + name + ".csv"] = selectivity_csv(**m);
    rep.files[std::string("winners_") + name + ".csv"] = winners_csv(**m);
  }

  if (r.truth) {
    const auto need = (r.truth->rois.size() * 4 + 4) / 5;
    os << "verdicts\n";
    os << "  closed-loop selectivity (>= " << need << "/" << r.truth->rois.size()
       << " diagonal wins): " << (r.truth->wins() >= need ? "PASS" : "FAIL") << "\n";
    os << "  cross-subject selectivity (>= " << need << "/" << r.cross->rois.size()
       << " diagonal wins): " << (r.cross->wins() >= need ? "PASS" : "FAIL") << "\n";
    os << "  fitted-model consistency (all diagonal wins): "
       << (r.fitted->wins() == r.fitted->rois.size() ? "PASS" : "FAIL") << "\n";
  }
  rep.text = os.str();
  rep.files["summary.txt"] = rep.text;
  rep.files["config.txt"] = r.config.describe();
  return rep;
}

void write_report(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const Report rep = report(result);
  for (const auto& [name, text] : rep.files) {
    std::ofstream os(dir / name);
    if (!os) throw FormatError("cannot write " + (dir / name).string());
    os << text;
  }
  if (!result.config.write_images) return;
  const auto names = result.truth ? result.truth->rois : std::vector<std::string>{};
  for (std::size_t j = 0; j < result.images.size() && j < names.size(); ++j) {
    for (std::size_t k = 0; k < result.images[j].size(); ++k) {
      io::write_png(dir / ("roi_" + names[j] + "_" + std::to_string(k) + ".png"), result.images[j][k]);
    }
  }
}

}  // namespace vwam::harness
