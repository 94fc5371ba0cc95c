#include "mcaae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>
#include <string>

#include "mcaae/error.hpp"

namespace mcaae {

namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[4] = {'M', 'C', 'A', 'E'};

template <typename T>
void put(std::ostream& out, T value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& in, std::size_t base) : in_(in), offset_(base) {}

  template <typename T>
  T get(const char* what) {
    T value{};
    in_.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (in_.gcount() != static_cast<std::streamsize>(sizeof(T))) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what, offset_);
    }
    offset_ += sizeof(T);
    return value;
  }

  std::size_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::size_t offset_;
};

}  // namespace

void write_network(std::ostream& out, const Network& net) {
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kCheckpointVersion);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(net.layer_count()));
  for (const DenseLayer& l : net.layers()) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.in_dim()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(l.out_dim()));
    put<std::uint8_t>(out, static_cast<std::uint8_t>(l.activation));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) put<double>(out, l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) put<double>(out, l.bias(r));
  }
}

Network read_network(std::istream& in, std::size_t base_offset) {
  Reader r(in, base_offset);
  char magic[4];
  for (char& c : magic) c = static_cast<char>(r.get<std::uint8_t>("magic"));
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("bad checkpoint magic", base_offset);
  const std::size_t version_at = r.offset();
  const auto version = r.get<std::uint32_t>("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version), version_at);
  }
  const auto count = r.get<std::uint32_t>("layer count");
  if (count == 0) throw FormatError("checkpoint has no layers", r.offset() - 4);
  std::vector<DenseLayer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::size_t layer_at = r.offset();
    const auto in_dim = r.get<std::uint32_t>("in_dim");
    const auto out_dim = r.get<std::uint32_t>("out_dim");
    const auto tag = r.get<std::uint8_t>("activation");
    if (in_dim == 0 || out_dim == 0) throw FormatError("layer with zero width", layer_at);
    if (tag > 2) throw FormatError("unknown activation tag " + std::to_string(tag), r.offset() - 1);
    DenseLayer l;
    l.activation = static_cast<Activation>(tag);
    l.weights.resize(out_dim, in_dim);
    l.bias.resize(out_dim);
    for (std::uint32_t row = 0; row < out_dim; ++row) {
      for (std::uint32_t col = 0; col < in_dim; ++col) l.weights(row, col) = r.get<double>("weights");
    }
    for (std::uint32_t row = 0; row < out_dim; ++row) l.bias(row) = r.get<double>("bias");
    if (!layers.empty() && layers.back().out_dim() != l.in_dim()) {
      throw FormatError("layer " + std::to_string(i) + " does not chain with previous layer", layer_at);
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) {
      throw FormatError("layer " + std::to_string(i) + " has non-finite parameters", layer_at);
    }
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

std::vector<std::uint8_t> serialize_networks(const std::vector<Network>& nets) {
  std::ostringstream out(std::ios::binary);
  for (const Network& n : nets) write_network(out, n);
  const std::string s = out.str();
  return {s.begin(), s.end()};
}

std::vector<Network> deserialize_networks(const std::vector<std::uint8_t>& bytes, std::size_t expected) {
  std::istringstream in(std::string(bytes.begin(), bytes.end()), std::ios::binary);
  std::vector<Network> nets;
  for (std::size_t i = 0; i < expected; ++i) {
    const auto at = static_cast<std::size_t>(in.tellg());
    nets.push_back(read_network(in, at));
  }
  const auto end = static_cast<std::size_t>(in.tellg());
  if (end != bytes.size()) throw FormatError("trailing bytes after checkpoint records", end);
  return nets;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ValidationError("failed writing " + path.string());
}

void save_networks(const std::filesystem::path& path, const std::vector<Network>& nets) {
  write_file_bytes(path, serialize_networks(nets));
}

std::vector<Network> load_networks(const std::filesystem::path& path, std::size_t expected) {
  return deserialize_networks(read_file_bytes(path), expected);
}

}  // namespace mcaae
