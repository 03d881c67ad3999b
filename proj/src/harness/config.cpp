#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "vwam/harness/harness.hpp"
#include "vwam/util/text.hpp"

namespace vwam::harness {

namespace pt = boost::property_tree;

namespace {

bool parse_bool(const std::string& v, const std::string& what) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError(what + ": expected a boolean, got '" + v + "'");
}

synthesizer::ColorMatrix parse_matrix(const std::string& v, const std::string& what) {
  const auto xs = util::parse_doubles(v, what);
  if (xs.size() != 9) throw ConfigError(what + ": expected 9 values for a 3x3 matrix");
  synthesizer::ColorMatrix m{};
  std::copy(xs.begin(), xs.end(), m.begin());
  return m;
}

std::string join(const std::vector<std::string>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? "," : "") + xs[i];
  return out;
}

template <typename T>
std::string join_num(const std::vector<T>& xs) {
  std::ostringstream os;
  os.precision(17);
  for (std::size_t i = 0; i < xs.size(); ++i) os << (i ? "," : "") << xs[i];
  return os.str();
}

}  // namespace

ExperimentConfig::ExperimentConfig() {
  synthesis.iterations = 256;
  synthesis.canvas = 128;
}

ExperimentConfig ExperimentConfig::parse(const std::string& text) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }

  ExperimentConfig c;
  using Setter = std::function<void(const std::string&, const std::string&)>;
  const std::map<std::string, std::map<std::string, Setter>> setters{
      {"",
       {{"seed", [&](auto& v, auto& w) { c.seed = util::parse_u64(v, w); }},
        {"threads", [&](auto& v, auto& w) { c.threads = util::parse_size(v, w); }}}},
      {"brain",
       {{"voxels", [&](auto& v, auto& w) { c.brain.voxels = util::parse_size(v, w); }},
        {"rois", [&](auto& v, auto& w) { c.brain.rois = util::parse_size(v, w); }},
        {"sparsity", [&](auto& v, auto& w) { c.brain.sparsity = util::parse_double(v, w); }},
        {"jitter", [&](auto& v, auto& w) { c.brain.jitter = util::parse_double(v, w); }},
        {"band", [&](auto& v, auto& w) { c.brain.band = util::parse_size(v, w); }},
        {"sigma",
         [&](auto& v, auto& w) {
           c.calibrate = v == "auto";
           if (!c.calibrate) c.brain.sigma = util::parse_double(v, w);
         }},
        {"target_r_bar", [&](auto& v, auto& w) { c.target_r_bar = util::parse_double(v, w); }},
        {"lags", [&](auto& v, auto& w) { c.brain.lags = util::parse_sizes(v, w); }},
        {"lag_kernel", [&](auto& v, auto& w) { c.brain.lag_kernel = util::parse_doubles(v, w); }},
        {"cross_subject_offset", [&](auto& v, auto& w) { c.cross_subject_offset = util::parse_u64(v, w); }}}},
      {"stimuli",
       {{"train", [&](auto& v, auto& w) { c.train_samples = util::parse_size(v, w); }},
        {"test", [&](auto& v, auto& w) { c.test_samples = util::parse_size(v, w); }},
        {"repeats", [&](auto& v, auto& w) { c.repeats = util::parse_size(v, w); }},
        {"calibration", [&](auto& v, auto& w) { c.calibration_samples = util::parse_size(v, w); }}}},
      {"encoder",
       {{"backbone", [&](auto& v, auto&) { c.backbone = v; }},
        {"fmax", [&](auto& v, auto& w) { c.fmax = util::parse_size(v, w); }},
        {"alphas", [&](auto& v, auto&) { c.alphas = encoder::parse_alpha_grid(v); }},
        {"cv_splits", [&](auto& v, auto& w) { c.cv_splits = util::parse_size(v, w); }},
        {"cv_resamples", [&](auto& v, auto& w) { c.cv_resamples = util::parse_size(v, w); }},
        {"ceiling_permutations", [&](auto& v, auto& w) { c.ceiling_permutations = util::parse_size(v, w); }}}},
      {"objective",
       {{"reference",
         [&](auto& v, auto&) {
           c.reference_rois.clear();
           if (v != "all") {
             for (auto& r : util::split(v, ',')) c.reference_rois.push_back(util::trim(r));
           }
         }}}},
      {"synthesis",
       {{"images_per_roi", [&](auto& v, auto& w) { c.images_per_roi = util::parse_size(v, w); }},
        {"iterations", [&](auto& v, auto& w) { c.synthesis.iterations = util::parse_size(v, w); }},
        {"canvas", [&](auto& v, auto& w) { c.synthesis.canvas = util::parse_size(v, w); }},
        {"learning_rate", [&](auto& v, auto& w) { c.synthesis.learning_rate = util::parse_double(v, w); }},
        {"init", [&](auto& v, auto&) { c.synthesis.init = synthesizer::parse_init_mode(v); }},
        {"augment",
         [&](auto& v, auto& w) {
           c.synthesis.augment = parse_bool(v, w) ? synthesizer::AugmentConfig{} : synthesizer::AugmentConfig::none();
         }},
        {"precision",
         [&](auto& v, auto&) {
           if (v != "float" && v != "double") throw ConfigError("synthesis.precision must be float or double");
           c.synthesis.precision = v == "float" ? synthesizer::Precision::kFloat : synthesizer::Precision::kDouble;
         }},
        {"color",
         [&](auto& v, auto& w) {
           if (v == "none") {
             c.synthesis.color.reset();
           } else {
             c.synthesis.color = parse_matrix(v, w);
           }
         }}}},
      {"report", {{"write_images", [&](auto& v, auto& w) { c.write_images = parse_bool(v, w); }}}},
  };

  auto apply = [&](const std::string& section, const std::string& key, const std::string& value) {
    auto s = setters.find(section);
    if (s == setters.end()) throw ConfigError("experiment config: unknown section [" + section + "]");
    auto k = s->second.find(key);
    if (k == s->second.end()) {
      throw ConfigError("experiment config: unknown key '" + key + "'" +
                        (section.empty() ? std::string() : " in [" + section + "]"));
    }
    k->second(util::trim(value), section.empty() ? key : section + "." + key);
  };
  for (const auto& [name, node] : tree) {
    if (node.empty() && setters.count(name) != 0) continue;  // empty section
    if (node.empty()) {
      apply("", name, node.data());
    } else {
      for (const auto& [key, leaf] : node) apply(name, key, leaf.data());
    }
  }
  c.synthesis.validate();
  return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open experiment config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse(ss.str());
}

std::string ExperimentConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "seed = " << seed << "\nthreads = " << threads << "\n"
     << "\n[brain]\nvoxels = " << brain.voxels << "\nrois = " << brain.rois << "\nsparsity = " << brain.sparsity
     << "\njitter = " << brain.jitter << "\nband = " << brain.band << "\nsigma = ";
  if (calibrate) {
    os << "auto";
  } else {
    os << brain.sigma;
  }
  os << "\ntarget_r_bar = " << target_r_bar << "\nlags = " << join_num(brain.lags)
     << "\nlag_kernel = " << join_num(brain.lag_kernel) << "\ncross_subject_offset = " << cross_subject_offset
     << "\n\n[stimuli]\ntrain = " << train_samples << "\ntest = " << test_samples << "\nrepeats = " << repeats
     << "\ncalibration = " << calibration_samples << "\n\n[encoder]\nbackbone = " << backbone << "\nfmax = " << fmax
     << "\nalphas = " << alphas.size() << ":" << alphas.front() << ":" << alphas.back()
     << "\ncv_splits = " << cv_splits << "\ncv_resamples = " << cv_resamples
     << "\nceiling_permutations = " << ceiling_permutations << "\n\n[objective]\nreference = "
     << (reference_rois.empty() ? "all" : join(reference_rois)) << "\n\n[synthesis]\nimages_per_roi = " << images_per_roi
     << "\niterations = " << synthesis.iterations << "\ncanvas = " << synthesis.canvas
     << "\nlearning_rate = " << synthesis.learning_rate << "\ninit = " << synthesizer::init_mode_name(synthesis.init)
     << "\naugment = " << (synthesis.augment.any() ? "on" : "off")
     << "\nprecision = " << (synthesis.precision == synthesizer::Precision::kFloat ? "float" : "double")
     << "\ncolor = ";
  if (synthesis.color) {
    os << join_num(std::vector<double>(synthesis.color->begin(), synthesis.color->end()));
  } else {
    os << "none";
  }
  os << "\n\n[report]\nwrite_images = " << (write_images ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace vwam::harness
