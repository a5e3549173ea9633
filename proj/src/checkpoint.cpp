#include "csd/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace csd {

namespace {

constexpr char kMagic[8] = {'C', 'S', 'D', 'C', 'K', 'P', 'T', '1'};

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T get(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw CheckpointError("truncated checkpoint");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}

}  // namespace

std::string encode_checkpoint(const nlohmann::json& meta, const ag::ParameterSet& params) {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  for (const auto& p : params) {
    header["tensors"].push_back({{"name", p.name}, {"rows", p.value.rows()}, {"cols", p.value.cols()}});
  }
  const std::string h = header.dump();
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint64_t>(out, h.size());
  out += h;
  for (const auto& p : params) {
    out.append(reinterpret_cast<const char*>(p.value.data()), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  return out;
}

CheckpointData decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  std::size_t pos = sizeof(kMagic);
  const auto version = get<std::uint32_t>(bytes, pos);
  if (version != kCheckpointVersion) throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto hlen = get<std::uint64_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw CheckpointError("truncated checkpoint header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(pos, hlen));
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("corrupt checkpoint header: ") + e.what());
  }
  pos += hlen;
  CheckpointData data;
  data.meta = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    if (rows < 0 || cols < 0) throw CheckpointError("negative tensor shape");
    ag::Matrix m(rows, cols);
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(double);
    if (pos + n > bytes.size()) throw CheckpointError("truncated tensor data");
    std::memcpy(m.data(), bytes.data() + pos, n);
    pos += n;
    data.tensors.emplace_back(t.at("name").get<std::string>(), std::move(m));
  }
  if (pos != bytes.size()) throw CheckpointError("trailing bytes after tensor data");
  return data;
}

void save_checkpoint(const std::string& path, const nlohmann::json& meta, const ag::ParameterSet& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint: " + path);
  out << encode_checkpoint(meta, params);
  if (!out) throw CheckpointError("failed writing checkpoint: " + path);
}

CheckpointData read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_checkpoint(ss.str());
}

void load_parameters(const CheckpointData& data, ag::ParameterSet& params) {
  if (static_cast<int>(data.tensors.size()) != params.size()) {
    throw CheckpointError("checkpoint holds " + std::to_string(data.tensors.size()) + " tensors, model expects " +
                          std::to_string(params.size()));
  }
  for (const auto& [name, m] : data.tensors) {
    const int id = params.find(name);
    if (id < 0) throw CheckpointError("unexpected tensor in checkpoint: " + name);
    auto& p = params.at(id);
    if (p.value.rows() != m.rows() || p.value.cols() != m.cols()) throw CheckpointError("shape mismatch for " + name);
    p.value = m;
  }
}

std::string parameter_hash(const ag::ParameterSet& params) {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* data, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  for (const auto& p : params) {
    mix(p.name.data(), p.name.size());
    const std::int64_t shape[2] = {p.value.rows(), p.value.cols()};
    mix(shape, sizeof(shape));
    mix(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace csd
