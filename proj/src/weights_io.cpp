// Copyright 2026 The nlroi Authors
// SPDX-License-Identifier: Apache-2.0

#include "nlroi/weights_io.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "nlroi/errors.hpp"

namespace nlroi {

namespace {

template <typename U>
void put_le(std::string& out, U v) {
  for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

class Reader {
 public:
  explicit Reader(std::string_view bytes) : bytes_(bytes) {}

  template <typename U>
  U get(const char* what) {
    need(sizeof(U), what);
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }

  std::string_view take(std::size_t n, const char* what) {
    need(n, what);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n, const char* what) {
    if (remaining() < n) {
      throw CorruptionError(std::string("weights file truncated while reading ") + what +
                            " at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::string encode_weights(const std::vector<NamedTensor>& tensors) {
  if (tensors.size() > std::numeric_limits<std::uint32_t>::max())
    throw FormatError("too many tensors for a weights file");
  std::set<std::string_view> names;
  std::string out(kWeightsMagic);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    if (!names.insert(name).second) throw FormatError("duplicate tensor name '" + name + "'");
    if (name.size() > std::numeric_limits<std::uint16_t>::max())
      throw FormatError("tensor name too long: '" + name.substr(0, 32) + "...'");
    if (t.rank() > std::numeric_limits<std::uint8_t>::max())
      throw FormatError("tensor '" + name + "' has rank above 255");
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (auto d : t.shape()) {
      if (d > std::numeric_limits<std::uint32_t>::max())
        throw FormatError("tensor '" + name + "' has a dimension above 2^32-1");
      put_le<std::uint32_t>(out, static_cast<std::uint32_t>(d));
    }
    for (double v : t.data()) put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
  }
  return out;
}

std::vector<NamedTensor> decode_weights(std::string_view bytes) {
  const std::string_view head = bytes.substr(0, kWeightsMagic.size());
  if (head != kWeightsMagic.substr(0, head.size())) {
    throw FormatError("not a weights file (bad magic)");
  }
  Reader r(bytes);
  r.take(kWeightsMagic.size(), "magic");
  const auto count = r.get<std::uint32_t>("tensor count");

  std::vector<NamedTensor> out;
  std::set<std::string> names;
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = r.get<std::uint16_t>("name length");
    std::string name(r.take(name_len, "name"));
    if (!names.insert(name).second) throw FormatError("duplicate tensor name '" + name + "'");
    const auto rank = r.get<std::uint8_t>("rank");
    Shape shape(rank);
    for (auto& d : shape) d = r.get<std::uint32_t>("dimension");
    // Check the payload fits before allocating for it.
    const std::size_t available = r.remaining() / 8;
    std::size_t numel = 1;
    if (std::find(shape.begin(), shape.end(), 0) != shape.end()) {
      numel = 0;
    } else {
      for (auto d : shape) {
        if (numel > available / d) {
          throw CorruptionError("tensor '" + name + "' payload truncated");
        }
        numel *= d;
      }
    }
    std::vector<double> data(numel);
    for (auto& v : data) v = std::bit_cast<double>(r.get<std::uint64_t>("values"));
    out.push_back({std::move(name), Tensor(std::move(shape), std::move(data))});
  }
  if (r.remaining() != 0) {
    throw CorruptionError(std::to_string(r.remaining()) + " trailing bytes after last tensor");
  }
  return out;
}

void save_weights(const std::string& path, const std::vector<NamedTensor>& tensors) {
  const std::string bytes = encode_weights(tensors);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing '" + path + "'");
}

std::vector<NamedTensor> load_weights(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open weights file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return decode_weights(ss.str());
}

}  // namespace nlroi
