#include "maskdet/model/checkpoint.hpp"

#include <array>
#include <cstring>
#include <fstream>
#include <sstream>

#include "maskdet/core/error.hpp"

namespace maskdet::model {

namespace {

constexpr std::array<char, 8> kMagic{'M', 'S', 'K', 'D', 'C', 'K', 'P', 'T'};

template <typename V>
void put(std::ostream& os, const V& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

void put_string(std::ostream& os, const std::string& s) {
  put<std::uint64_t>(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

template <typename V>
V get(std::istream& is, const std::string& what) {
  V v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw ParseError("checkpoint truncated while reading " + what);
  return v;
}

std::string get_string(std::istream& is, const std::string& what) {
  const auto n = get<std::uint64_t>(is, what);
  if (n > (1ull << 32)) throw ParseError("checkpoint: implausible length for " + what);
  std::string s(n, '\0');
  if (n > 0 && !is.read(s.data(), static_cast<std::streamsize>(n))) {
    throw ParseError("checkpoint truncated while reading " + what);
  }
  return s;
}

std::string shape(Eigen::Index r, Eigen::Index c) { return std::to_string(r) + "x" + std::to_string(c); }

}  // namespace

void Checkpoint::save(const std::filesystem::path& path) const {
  std::filesystem::path tmp = path;
  tmp += ".partial";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot write checkpoint " + tmp.string());
    os.write(kMagic.data(), kMagic.size());
    put<std::uint32_t>(os, kVersion);
    put_string(os, config_text);
    put<std::uint64_t>(os, scalars.size());
    for (const auto& [name, v] : scalars) {
      put_string(os, name);
      put<double>(os, v);
    }
    put<std::uint64_t>(os, arrays.size());
    for (const auto& [name, m] : arrays) {
      put_string(os, name);
      put<std::uint64_t>(os, static_cast<std::uint64_t>(m.rows()));
      put<std::uint64_t>(os, static_cast<std::uint64_t>(m.cols()));
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    }
    if (!os) throw Error("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open checkpoint " + path.string());
  std::array<char, 8> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw ParseError(path.string() + " is not a checkpoint");
  }
  const auto version = get<std::uint32_t>(is, "version");
  if (version != kVersion) {
    throw ParseError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                     std::to_string(kVersion) + ")");
  }
  Checkpoint c;
  c.config_text = get_string(is, "config");
  const auto ns = get<std::uint64_t>(is, "scalar count");
  for (std::uint64_t i = 0; i < ns; ++i) {
    std::string name = get_string(is, "scalar name");
    c.scalars[name] = get<double>(is, name);
  }
  const auto na = get<std::uint64_t>(is, "array count");
  for (std::uint64_t i = 0; i < na; ++i) {
    std::string name = get_string(is, "array name");
    const auto rows = get<std::uint64_t>(is, name);
    const auto cols = get<std::uint64_t>(is, name);
    if (rows * cols > (1ull << 31)) throw ParseError("checkpoint: implausible shape for " + name);
    nn::Matrix<double> m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    if (m.size() > 0 &&
        !is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)))) {
      throw ParseError("checkpoint truncated while reading " + name);
    }
    c.arrays.emplace(std::move(name), std::move(m));
  }
  return c;
}

double Checkpoint::scalar(const std::string& name) const {
  const auto it = scalars.find(name);
  if (it == scalars.end()) throw ParseError("checkpoint has no scalar '" + name + "'");
  return it->second;
}

template <typename T>
void export_network(Network<T>& net, Checkpoint& ckpt) {
  ckpt.config_text = net.config().to_text();
  net.visit_parameters([&](const std::string& name, nn::Parameter<T>& p) {
    ckpt.arrays["param." + name] = p.value.template cast<double>();
  });
  net.visit_buffers([&](const std::string& name, nn::Matrix<T>& m) {
    ckpt.arrays["buffer." + name] = m.template cast<double>();
  });
}

template <typename T>
void import_network(Network<T>& net, const Checkpoint& ckpt) {
  std::ostringstream diff;
  auto load = [&](const std::string& key, nn::Matrix<T>& dst) {
    const auto it = ckpt.arrays.find(key);
    if (it == ckpt.arrays.end()) {
      diff << "\n  missing " << key << " (expected " << shape(dst.rows(), dst.cols()) << ")";
      return;
    }
    if (it->second.rows() != dst.rows() || it->second.cols() != dst.cols()) {
      diff << "\n  " << key << ": checkpoint " << shape(it->second.rows(), it->second.cols()) << ", model "
           << shape(dst.rows(), dst.cols());
      return;
    }
    dst = it->second.template cast<T>();
  };
  net.visit_parameters([&](const std::string& name, nn::Parameter<T>& p) { load("param." + name, p.value); });
  net.visit_buffers([&](const std::string& name, nn::Matrix<T>& m) { load("buffer." + name, m); });
  const std::string d = diff.str();
  if (!d.empty()) throw ShapeError("checkpoint does not fit the model:" + d);
}

template <typename T>
Network<T> network_from_checkpoint(const Checkpoint& ckpt) {
  const Config cfg = ckpt.config();
  Network<T> net(cfg, cfg.seed);
  import_network(net, ckpt);
  return net;
}

template void export_network<float>(Network<float>&, Checkpoint&);
template void export_network<double>(Network<double>&, Checkpoint&);
template void import_network<float>(Network<float>&, const Checkpoint&);
template void import_network<double>(Network<double>&, const Checkpoint&);
template Network<float> network_from_checkpoint<float>(const Checkpoint&);
template Network<double> network_from_checkpoint<double>(const Checkpoint&);

}  // namespace maskdet::model
