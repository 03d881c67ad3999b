#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <fstream>
#include <set>
#include <sstream>

#include "vwam/backbone/backbone.hpp"
#include "vwam/util/text.hpp"

namespace vwam::backbone {
namespace {

namespace pt = boost::property_tree;

StageSpec parse_stage(const std::string& name, const std::string& text) {
  const auto words = util::split_ws(text);
  if (words.empty()) throw ConfigError("stage " + name + ": missing kind");
  StageSpec st;
  st.name = name;
  const std::string& kind = words[0];
  if (kind == "conv") {
    st.kind = StageKind::kConv;
  } else if (kind == "relu") {
    st.kind = StageKind::kRelu;
  } else if (kind == "maxpool") {
    st.kind = StageKind::kMaxPool;
    st.kernel = 2;
    st.stride = 2;
  } else if (kind == "global_avgpool") {
    st.kind = StageKind::kGlobalAvgPool;
  } else if (kind == "linear") {
    st.kind = StageKind::kLinear;
  } else {
    throw ConfigError("stage " + name + ": unknown kind '" + kind + "'");
  }
  for (std::size_t i = 1; i < words.size(); ++i) {
    const auto eq = words[i].find('=');
    if (eq == std::string::npos) throw ConfigError("stage " + name + ": expected key=value, got " + words[i]);
    const std::string key = words[i].substr(0, eq);
    const std::size_t value = util::parse_size(words[i].substr(eq + 1), "stage " + name + " " + key);
    if (key == "in") {
      st.in = value;
    } else if (key == "out") {
      st.out = value;
    } else if (key == "kernel") {
      st.kernel = value;
    } else if (key == "stride") {
      st.stride = value;
    } else if (key == "pad") {
      st.pad = value;
    } else {
      throw ConfigError("stage " + name + ": unknown attribute '" + key + "'");
    }
  }
  return st;
}

Shape parse_shape(const std::string& text, const std::string& what) {
  Shape shape;
  for (const auto& part : util::split(text, 'x')) shape.push_back(util::parse_size(part, what));
  return shape;
}

std::array<double, 3> parse_triple(const std::string& text, const std::string& what) {
  const auto values = util::parse_doubles(text, what);
  if (values.size() != 3) throw ConfigError(what + ": expected 3 values");
  return {values[0], values[1], values[2]};
}

Shape stage_output(const StageSpec& st, const Shape& in) {
  const std::string where = "stage " + st.name + ": ";
  switch (st.kind) {
    case StageKind::kConv: {
      if (in.size() != 3 || in[0] != st.in) {
        throw ShapeError(where + "expects [" + std::to_string(st.in) + ", H, W], got " + ad::shape_str(in));
      }
      Shape out{st.out, 0, 0};
      for (int a = 1; a <= 2; ++a) {
        if (in[a] + 2 * st.pad < st.kernel) throw ShapeError(where + "input smaller than kernel");
        out[a] = (in[a] + 2 * st.pad - st.kernel) / st.stride + 1;
      }
      return out;
    }
    case StageKind::kRelu:
      return in;
    case StageKind::kMaxPool: {
      if (in.size() != 3) throw ShapeError(where + "expects [C, H, W]");
      Shape out = in;
      for (int a = 1; a <= 2; ++a) {
        if (in[a] < st.kernel) throw ShapeError(where + "input smaller than kernel");
        out[a] = (in[a] - st.kernel) / st.stride + 1;
      }
      return out;
    }
    case StageKind::kGlobalAvgPool:
      if (in.size() < 2) throw ShapeError(where + "expects spatial input");
      return {in[0]};
    case StageKind::kLinear:
      if (ad::shape_size(in) != st.in) throw ShapeError(where + "input size differs from in=" + std::to_string(st.in));
      return {st.out};
  }
  return in;
}

}  // namespace

BackboneSpec BackboneSpec::parse(const std::string& text, const std::filesystem::path& base_dir) {
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("backbone profile: ") + e.what());
  }
  BackboneSpec spec;
  const auto& head = tree.get_child_optional("backbone");
  if (!head) throw ConfigError("backbone profile: missing [backbone] section");
  spec.name = head->get<std::string>("name", "unnamed");
  spec.input_size = util::parse_size(head->get<std::string>("input_size", "0"), "input_size");
  if (auto m = head->get_optional<std::string>("mean")) spec.mean = parse_triple(*m, "mean");
  if (auto s = head->get_optional<std::string>("std")) spec.stddev = parse_triple(*s, "std");
  spec.weights = head->get<std::string>("weights", "");
  if (!spec.weights.empty() && !spec.weights.starts_with("seeded:")) {
    std::filesystem::path w(spec.weights);
    if (w.is_relative() && !base_dir.empty()) spec.weights = (base_dir / w).string();
  }
  if (auto stages = tree.get_child_optional("stages")) {
    for (const auto& [name, node] : *stages) spec.stages.push_back(parse_stage(name, node.data()));
  }
  if (auto taps = tree.get_child_optional("taps")) {
    for (const auto& [name, node] : *taps) {
      TapSpec tap{name, std::nullopt};
      const std::string value = util::trim(node.data());
      if (!value.empty()) tap.declared_shape = parse_shape(value, "tap " + name);
      spec.taps.push_back(std::move(tap));
    }
  }
  spec.validate();
  return spec;
}

BackboneSpec BackboneSpec::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open backbone profile " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.parent_path());
}

std::vector<std::string> BackboneSpec::tap_names() const {
  std::vector<std::string> names;
  for (const auto& t : taps) names.push_back(t.name);
  return names;
}

std::vector<Shape> BackboneSpec::tap_shapes() const {
  std::vector<Shape> shapes;
  if (!executable()) {
    for (const auto& t : taps) shapes.push_back(*t.declared_shape);
    return shapes;
  }
  std::map<std::string, Shape> by_stage;
  Shape cur{3, input_size, input_size};
  for (const auto& st : stages) {
    cur = stage_output(st, cur);
    by_stage[st.name] = cur;
  }
  for (const auto& t : taps) shapes.push_back(by_stage.at(t.name));
  return shapes;
}

void BackboneSpec::validate() const {
  if (input_size == 0) throw ConfigError("backbone " + name + ": input_size must be positive");
  for (double s : stddev) {
    if (!(s > 0)) throw ConfigError("backbone " + name + ": normalization std must be > 0");
  }
  if (taps.empty()) throw ConfigError("backbone " + name + ": no taps");
  std::set<std::string> seen;
  for (const auto& t : taps) {
    if (!seen.insert(t.name).second) throw ConfigError("backbone " + name + ": duplicate tap " + t.name);
  }
  if (!executable()) {
    for (const auto& t : taps) {
      if (!t.declared_shape || t.declared_shape->empty()) {
        throw ConfigError("tap " + t.name + ": shape required when the profile has no stages");
      }
    }
    return;
  }
  std::map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < stages.size(); ++i) {
    if (!position.emplace(stages[i].name, i).second) throw ConfigError("duplicate stage " + stages[i].name);
    const auto& st = stages[i];
    if ((st.kind == StageKind::kConv || st.kind == StageKind::kMaxPool) && (st.kernel == 0 || st.stride == 0)) {
      throw ConfigError("stage " + st.name + ": kernel and stride must be positive");
    }
    if ((st.kind == StageKind::kConv || st.kind == StageKind::kLinear) && (st.in == 0 || st.out == 0)) {
      throw ConfigError("stage " + st.name + ": in and out must be positive");
    }
  }
  std::size_t last = 0;
  for (std::size_t i = 0; i < taps.size(); ++i) {
    auto it = position.find(taps[i].name);
    if (it == position.end()) throw ConfigError("tap " + taps[i].name + " does not name a stage");
    if (i > 0 && it->second <= last) throw ConfigError("taps must follow network order: " + taps[i].name);
    last = it->second;
  }
  const auto shapes = tap_shapes();
  for (std::size_t i = 0; i < taps.size(); ++i) {
    if (taps[i].declared_shape && *taps[i].declared_shape != shapes[i]) {
      throw ConfigError("tap " + taps[i].name + ": declared shape " + ad::shape_str(*taps[i].declared_shape) +
                        " but the stages produce " + ad::shape_str(shapes[i]));
    }
  }
}

BackboneSpec tiny_cnn_spec(std::uint64_t seed) {
  std::ostringstream s;
  s << "[backbone]\nname = tiny_cnn\ninput_size = 64\n"
    << "mean = 0.485, 0.456, 0.406\nstd = 0.229, 0.224, 0.225\n"
    << "weights = seeded:" << seed << "\n"
    << "[stages]\n"
    << "conv1 = conv in=3 out=16 kernel=3 stride=2 pad=1\n"
    << "relu1 = relu\n"
    << "conv2 = conv in=16 out=32 kernel=3 stride=2 pad=1\n"
    << "relu2 = relu\n"
    << "pool2 = maxpool kernel=2 stride=2\n"
    << "conv3 = conv in=32 out=64 kernel=3 stride=1 pad=1\n"
    << "relu3 = relu\n"
    << "gap = global_avgpool\n"
    << "fc = linear in=64 out=64\n"
    << "[taps]\nconv1 =\nrelu1 =\nconv2 =\nrelu2 =\npool2 =\nrelu3 =\nfc =\n";
  return BackboneSpec::parse(s.str());
}

BackboneSpec linear_probe_spec(std::size_t input_size, std::size_t channels, std::uint64_t seed) {
  std::ostringstream s;
  s << "[backbone]\nname = linear_probe\ninput_size = " << input_size << "\n"
    << "mean = 0.5, 0.5, 0.5\nstd = 0.25, 0.25, 0.25\n"
    << "weights = seeded:" << seed << "\n"
    << "[stages]\nprobe = conv in=3 out=" << channels << " kernel=1 stride=1 pad=0\n"
    << "[taps]\nprobe =\n";
  return BackboneSpec::parse(s.str());
}

}  // namespace vwam::backbone
