#include "pixobj/weights.hpp"

#include <zlib.h>

#include <bit>
#include <charconv>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace pixobj {

namespace fs = std::filesystem;

namespace {

constexpr const char* kMagic = "pixobj-weights";
constexpr int kVersion = 1;

static_assert(std::endian::native == std::endian::little, "blob encoding assumes a little-endian host");

std::uint32_t crc_of(const std::vector<char>& bytes) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()),
                                          static_cast<uInt>(bytes.size())));
}

std::string hex32(std::uint32_t v) {
  char buf[9];
  std::snprintf(buf, sizeof buf, "%08x", v);
  return buf;
}

std::string join_dims(const std::vector<int>& dims) {
  std::string s;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i) s += ',';
    s += std::to_string(dims[i]);
  }
  return s;
}

std::string layer_line(std::size_t i, const LayerSpec& l) {
  std::ostringstream os;
  os << "layer " << i << ' ' << to_string(l.kind);
  switch (l.kind) {
    case LayerKind::kConv:
      os << " channels=" << l.channels << " kernel=" << l.kernel << " stride=" << l.stride << " pad=" << l.pad
         << " dilation=" << l.dilation;
      break;
    case LayerKind::kMaxPool:
      os << " kernel=" << l.kernel << " stride=" << l.stride << " pad=" << l.pad;
      break;
    case LayerKind::kDropout: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.17g", l.rate);
      os << " rate=" << buf;
      break;
    }
    case LayerKind::kRelu:
      break;
  }
  return os.str();
}

void write_blob(const fs::path& path, std::span<const float> values, std::uint32_t& crc) {
  std::vector<char> bytes(values.size() * sizeof(float));
  std::memcpy(bytes.data(), values.data(), bytes.size());
  crc = crc_of(bytes);
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing blob '" + path.string() + "'");
}

struct TensorRecord {
  std::size_t layer = 0;
  std::string name;
  std::vector<int> shape;
  std::string file;
  std::uint32_t crc = 0;
  int line = 0;
};

struct Manifest {
  NetworkConfig config;
  std::int64_t iteration = 0;
  std::vector<TensorRecord> tensors;
};

std::map<std::string, std::string> parse_kv(std::istringstream& is, const std::string& ctx) {
  std::map<std::string, std::string> kv;
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos || eq == 0) throw CorruptManifestError(ctx + ": malformed field '" + tok + "'");
    kv[tok.substr(0, eq)] = tok.substr(eq + 1);
  }
  return kv;
}

template <typename N>
N parse_num(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& ctx) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw CorruptManifestError(ctx + ": missing '" + key + "'");
  N v{};
  const char* b = it->second.data();
  const char* e = b + it->second.size();
  auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc() || ptr != e) throw CorruptManifestError(ctx + ": bad value for '" + key + "'");
  return v;
}

double parse_double(const std::map<std::string, std::string>& kv, const std::string& key, const std::string& ctx) {
  const auto it = kv.find(key);
  if (it == kv.end()) throw CorruptManifestError(ctx + ": missing '" + key + "'");
  try {
    std::size_t used = 0;
    const double v = std::stod(it->second, &used);
    if (used != it->second.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw CorruptManifestError(ctx + ": bad value for '" + key + "'");
  }
}

Manifest read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.txt";
  std::ifstream in(path);
  if (!in) throw IoError("cannot open weight manifest '" + path.string() + "'");
  Manifest m;
  std::string line;
  int lineno = 0;
  bool header = false;
  std::size_t expected_layers = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const std::string ctx = path.string() + ":" + std::to_string(lineno);
    std::istringstream is(line);
    std::string key;
    is >> key;
    if (!header) {
      int version = 0;
      if (key != kMagic || !(is >> version) || version != kVersion) {
        throw CorruptManifestError(ctx + ": not a weight manifest (expected '" + kMagic + " 1')");
      }
      header = true;
    } else if (key == "preset") {
      is >> m.config.preset;
    } else if (key == "input_channels") {
      if (!(is >> m.config.input_channels)) throw CorruptManifestError(ctx + ": bad input_channels");
    } else if (key == "iteration") {
      if (!(is >> m.iteration)) throw CorruptManifestError(ctx + ": bad iteration");
    } else if (key == "layers") {
      if (!(is >> expected_layers)) throw CorruptManifestError(ctx + ": bad layer count");
    } else if (key == "layer") {
      std::size_t idx = 0;
      std::string kind;
      if (!(is >> idx >> kind) || idx != m.config.layers.size()) {
        throw CorruptManifestError(ctx + ": layer lines must be numbered consecutively");
      }
      const auto kv = parse_kv(is, ctx);
      LayerSpec s;
      if (kind == "conv") {
        s.kind = LayerKind::kConv;
        s.channels = parse_num<int>(kv, "channels", ctx);
        s.kernel = parse_num<int>(kv, "kernel", ctx);
        s.stride = parse_num<int>(kv, "stride", ctx);
        s.pad = parse_num<int>(kv, "pad", ctx);
        s.dilation = parse_num<int>(kv, "dilation", ctx);
      } else if (kind == "pool") {
        s.kind = LayerKind::kMaxPool;
        s.kernel = parse_num<int>(kv, "kernel", ctx);
        s.stride = parse_num<int>(kv, "stride", ctx);
        s.pad = parse_num<int>(kv, "pad", ctx);
      } else if (kind == "dropout") {
        s.kind = LayerKind::kDropout;
        s.rate = parse_double(kv, "rate", ctx);
      } else if (kind == "relu") {
        s.kind = LayerKind::kRelu;
      } else {
        throw CorruptManifestError(ctx + ": unknown layer kind '" + kind + "'");
      }
      m.config.layers.push_back(s);
    } else if (key == "tensor") {
      const auto kv = parse_kv(is, ctx);
      TensorRecord t;
      t.line = lineno;
      t.layer = parse_num<std::size_t>(kv, "layer", ctx);
      t.name = kv.count("name") ? kv.at("name") : throw CorruptManifestError(ctx + ": missing 'name'");
      t.file = kv.count("file") ? kv.at("file") : throw CorruptManifestError(ctx + ": missing 'file'");
      if (!kv.count("dtype") || kv.at("dtype") != "f32") throw CorruptManifestError(ctx + ": dtype must be f32");
      if (!kv.count("shape")) throw CorruptManifestError(ctx + ": missing 'shape'");
      std::stringstream ss(kv.at("shape"));
      std::string d;
      while (std::getline(ss, d, ',')) {
        int v = 0;
        auto [ptr, ec] = std::from_chars(d.data(), d.data() + d.size(), v);
        if (ec != std::errc() || ptr != d.data() + d.size() || v < 0) {
          throw CorruptManifestError(ctx + ": bad shape '" + kv.at("shape") + "'");
        }
        t.shape.push_back(v);
      }
      const std::string& crc = kv.count("crc32") ? kv.at("crc32") : throw CorruptManifestError(ctx + ": missing 'crc32'");
      auto [ptr, ec] = std::from_chars(crc.data(), crc.data() + crc.size(), t.crc, 16);
      if (ec != std::errc() || ptr != crc.data() + crc.size()) throw CorruptManifestError(ctx + ": bad crc32");
      if (t.file.find('/') != std::string::npos) throw CorruptManifestError(ctx + ": blob must be in archive dir");
      m.tensors.push_back(std::move(t));
    } else {
      throw CorruptManifestError(ctx + ": unknown key '" + key + "'");
    }
  }
  if (!header) throw CorruptManifestError(path.string() + ": empty manifest");
  if (m.config.layers.size() != expected_layers) {
    throw CorruptManifestError(path.string() + ": declared " + std::to_string(expected_layers) + " layers, found " +
                               std::to_string(m.config.layers.size()));
  }
  return m;
}

std::vector<float> read_blob(const fs::path& path, std::size_t count, std::uint32_t crc, const std::string& what) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw IoError("cannot open blob '" + path.string() + "' for " + what);
  const auto size = static_cast<std::size_t>(in.tellg());
  const std::size_t expected = count * sizeof(float);
  if (size < expected) {
    throw TruncatedBlobError("blob '" + path.string() + "' for " + what + " holds " + std::to_string(size) +
                             " bytes, expected " + std::to_string(expected));
  }
  if (size > expected) {
    throw CorruptManifestError("blob '" + path.string() + "' for " + what + " is larger than its declared shape");
  }
  std::vector<char> bytes(size);
  in.seekg(0);
  in.read(bytes.data(), static_cast<std::streamsize>(size));
  if (!in) throw IoError("read failed for blob '" + path.string() + "'");
  if (crc_of(bytes) != crc) throw ChecksumError("checksum mismatch in blob '" + path.string() + "' for " + what);
  std::vector<float> values(count);
  std::memcpy(values.data(), bytes.data(), expected);
  return values;
}

std::vector<int> dims_of(const Shape& s) { return {s.n, s.c, s.h, s.w}; }

}  // namespace

void save_weights(const Network& net, const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create archive directory '" + dir.string() + "': " + ec.message());

  std::ostringstream os;
  const NetworkConfig& cfg = net.config();
  os << kMagic << ' ' << kVersion << '\n';
  os << "preset " << cfg.preset << '\n';
  os << "input_channels " << cfg.input_channels << '\n';
  os << "iteration " << net.iteration() << '\n';
  os << "layers " << cfg.layers.size() << '\n';
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) os << layer_line(i, cfg.layers[i]) << '\n';

  auto emit = [&](std::size_t layer, const std::string& name, const std::vector<int>& shape,
                  std::span<const float> values) {
    char file[64];
    std::snprintf(file, sizeof file, "layer%02zu_%s.f32", layer, name.c_str());
    std::uint32_t crc = 0;
    write_blob(dir / file, values, crc);
    os << "tensor layer=" << layer << " name=" << name << " shape=" << join_dims(shape) << " dtype=f32 file=" << file
       << " crc32=" << hex32(crc) << '\n';
  };
  for (const auto& [idx, p] : net.params()) {
    const int oc = p.out_channels();
    emit(idx, "weight", dims_of(p.weights.shape()), p.weights.data());
    emit(idx, "bias", {oc}, p.bias);
    const auto& v = net.velocity().at(idx);
    emit(idx, "weight_velocity", dims_of(v.weights.shape()), v.weights.data());
    emit(idx, "bias_velocity", {oc}, v.bias);
  }
  std::ofstream out(dir / "manifest.txt", std::ios::binary);
  out << os.str();
  if (!out) throw IoError("failed writing manifest in '" + dir.string() + "'");
}

void load_weights_into(Network& target, const fs::path& dir) {
  const Manifest m = read_manifest(dir);
  Network net = target;
  auto& params = net.params();
  auto& velocity = net.velocity();
  std::map<std::size_t, int> seen;
  for (const TensorRecord& t : m.tensors) {
    const std::string what = "layer " + std::to_string(t.layer) + " " + t.name;
    const auto it = params.find(t.layer);
    if (it == params.end()) {
      throw ShapeMismatchError("archive tensor for layer " + std::to_string(t.layer) +
                               " has no matching conv layer in the network");
    }
    ConvParams<float>& p = it->second;
    std::vector<int> expected;
    std::span<float> dest;
    if (t.name == "weight") {
      expected = dims_of(p.weights.shape());
      dest = p.weights.data();
    } else if (t.name == "bias") {
      expected = {p.out_channels()};
      dest = p.bias;
    } else if (t.name == "weight_velocity") {
      expected = dims_of(velocity.at(t.layer).weights.shape());
      dest = velocity.at(t.layer).weights.data();
    } else if (t.name == "bias_velocity") {
      expected = {p.out_channels()};
      dest = velocity.at(t.layer).bias;
    } else {
      throw CorruptManifestError("manifest line " + std::to_string(t.line) + ": unknown tensor name '" + t.name + "'");
    }
    if (t.shape != expected) {
      throw ShapeMismatchError("shape mismatch for " + what + ": network expects " + join_dims(expected) +
                               ", archive has " + join_dims(t.shape));
    }
    const auto values = read_blob(dir / t.file, dest.size(), t.crc, what);
    std::copy(values.begin(), values.end(), dest.begin());
    if (t.name == "weight" || t.name == "bias") ++seen[t.layer];
  }
  for (const auto& [idx, p] : params) {
    if (seen[idx] != 2) {
      throw ShapeMismatchError("archive is missing weight or bias for layer " + std::to_string(idx));
    }
  }
  const auto& mine = net.config().layers;
  for (std::size_t i = 0; i < std::max(mine.size(), m.config.layers.size()); ++i) {
    if (i >= mine.size() || i >= m.config.layers.size() || !(mine[i] == m.config.layers[i])) {
      const std::string a = i < m.config.layers.size() ? layer_line(i, m.config.layers[i]) : "<none>";
      const std::string b = i < mine.size() ? layer_line(i, mine[i]) : "<none>";
      throw ShapeMismatchError("layer " + std::to_string(i) + " differs: archive '" + a + "', network '" + b + "'");
    }
  }
  net.set_iteration(m.iteration);
  target = std::move(net);
}

Network load_weights(const fs::path& dir) {
  const Manifest m = read_manifest(dir);
  Network net(m.config);
  load_weights_into(net, dir);
  return net;
}

}  // namespace pixobj
