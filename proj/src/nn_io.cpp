#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "fedseq/nn.hpp"

namespace fedseq {
namespace {

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  std::uint8_t u8() {
    need(1);
    return bytes_[pos_++];
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      throw IoError("checkpoint truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                    " more)");
    }
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const ParamVector& params) {
  std::vector<std::uint8_t> out;
  put_u64(out, params.layout().size());
  for (const auto& l : params.layout()) {
    put_u64(out, l.name.size());
    out.insert(out.end(), l.name.begin(), l.name.end());
    out.push_back(static_cast<std::uint8_t>(l.role));
    put_u64(out, l.offset);
    put_u64(out, l.length);
  }
  for (Eigen::Index i = 0; i < params.values().size(); ++i) put_u64(out, std::bit_cast<std::uint64_t>(params.values()[i]));
  return out;
}

ParamVector deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const auto layers = r.u64();
  std::vector<LayerSlice> layout;
  std::size_t total = 0;
  for (std::uint64_t i = 0; i < layers; ++i) {
    LayerSlice l;
    l.name = r.str(r.u64());
    const auto role = r.u8();
    if (role > 1) throw IoError("invalid layer role " + std::to_string(role) + " for layer '" + l.name + "'");
    l.role = static_cast<LayerRole>(role);
    l.offset = r.u64();
    l.length = r.u64();
    total += l.length;
    layout.push_back(std::move(l));
  }
  if (r.remaining() != total * 8) {
    throw IoError("checkpoint holds " + std::to_string(r.remaining()) + " value bytes, layout needs " +
                  std::to_string(total * 8));
  }
  VectorXd values(static_cast<Eigen::Index>(total));
  for (std::size_t i = 0; i < total; ++i) values[static_cast<Eigen::Index>(i)] = std::bit_cast<double>(r.u64());
  return ParamVector(std::move(values), std::move(layout));
}

void save_params(const ParamVector& params, const std::string& path) {
  const auto bytes = serialize(params);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing '" + path + "'");
}

ParamVector load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace fedseq
