#include "sct/shard.hpp"

#include <cstring>
#include <sstream>

#include "sct/error.hpp"

namespace sct {

namespace {

constexpr char kMagic[8] = {'S', 'C', 'T', 'S', 'H', 'R', 'D', '1'};

template <typename T>
void put(std::string& buf, const T& v) {
  const char* p = reinterpret_cast<const char*>(&v);
  buf.append(p, sizeof(T));
}

void put_string(std::string& buf, const std::string& s) {
  put<uint32_t>(buf, static_cast<uint32_t>(s.size()));
  buf.append(s);
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;

  template <typename T>
  T get() {
    if (pos + sizeof(T) > buf.size()) throw DataError("truncated shard record");
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string get_string() {
    const uint32_t len = get<uint32_t>();
    if (pos + len > buf.size()) throw DataError("truncated shard string");
    std::string s = buf.substr(pos, len);
    pos += len;
    return s;
  }
};

}  // namespace

ShardWriter::ShardWriter(const std::string& path, const ShardHeader& header)
    : f_(path, std::ios::binary), path_(path), k_(header.k) {
  if (!f_) throw DataError("cannot write shard: " + path);
  f_.write(kMagic, sizeof(kMagic));
  std::string buf;
  put<uint64_t>(buf, header.vocab_hash);
  put<uint64_t>(buf, header.node_vocab_hash);
  put<uint32_t>(buf, header.k);
  put<uint32_t>(buf, static_cast<uint32_t>(header.languages.size()));
  for (const auto& l : header.languages) put_string(buf, l);
  f_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

void ShardWriter::write(const ModelSnippet& snip) {
  std::string buf;
  put_string(buf, snip.id);
  put<int32_t>(buf, snip.language_id);
  put<int32_t>(buf, snip.n);
  for (int i = 0; i < snip.n; ++i) {
    for (int j = 0; j < kSubtokenSlots; ++j) {
      put<uint32_t>(buf, static_cast<uint32_t>(snip.subtoken_ids[i][j]));
    }
  }
  for (int i = 0; i < snip.n; ++i) {
    put<uint8_t>(buf, static_cast<uint8_t>(snip.kind_ids[i]));
  }
  for (int i = 0; i < snip.n; ++i) {
    put<uint32_t>(buf, static_cast<uint32_t>(snip.node_type_ids[i]));
  }
  buf.append(reinterpret_cast<const char*>(snip.is_leaf.data()), snip.n);
  put<int32_t>(buf, snip.name_pos);
  put<uint32_t>(buf, static_cast<uint32_t>(snip.label_ids.size()));
  for (size_t i = 0; i < snip.label_ids.size(); ++i) {
    put<uint32_t>(buf, static_cast<uint32_t>(snip.label_ids[i]));
    put_string(buf, snip.label_strings[i]);
  }
  put<uint32_t>(buf, static_cast<uint32_t>(snip.unk_slots.size()));
  for (const auto& [flat, s] : snip.unk_slots) {
    put<uint32_t>(buf, static_cast<uint32_t>(flat));
    put_string(buf, s);
  }
  for (int r = 0; r < kNumRelations; ++r) {
    const auto& rel = snip.binned.rel[r];
    if (rel.bin_index.size() != size_t(snip.n) * snip.n ||
        rel.bin_value.size() != size_t(k_)) {
      throw DataError("shard write: binned relation shape mismatch");
    }
    buf.append(reinterpret_cast<const char*>(rel.bin_index.data()),
               rel.bin_index.size());
    for (double v : rel.bin_value) {
      put<float>(buf, static_cast<float>(v));
    }
  }
  const uint64_t len = buf.size();
  f_.write(reinterpret_cast<const char*>(&len), sizeof(len));
  f_.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f_) throw DataError("failed writing shard record to " + path_);
}

void ShardWriter::close() {
  f_.close();
  if (!f_) throw DataError("failed closing shard " + path_);
}

Shard read_shard(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw DataError("cannot read shard: " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string all = ss.str();
  if (all.size() < sizeof(kMagic) ||
      std::memcmp(all.data(), kMagic, sizeof(kMagic)) != 0) {
    throw DataError("bad shard magic in " + path);
  }
  Reader rd{all, sizeof(kMagic)};
  Shard shard;
  shard.header.vocab_hash = rd.get<uint64_t>();
  shard.header.node_vocab_hash = rd.get<uint64_t>();
  shard.header.k = rd.get<uint32_t>();
  const uint32_t nlang = rd.get<uint32_t>();
  for (uint32_t i = 0; i < nlang; ++i) {
    shard.header.languages.push_back(rd.get_string());
  }
  const int k = static_cast<int>(shard.header.k);
  while (rd.pos < all.size()) {
    const uint64_t len = rd.get<uint64_t>();
    const size_t record_end = rd.pos + len;
    if (record_end > all.size()) throw DataError("truncated record in " + path);
    ModelSnippet s;
    s.id = rd.get_string();
    s.language_id = rd.get<int32_t>();
    s.n = rd.get<int32_t>();
    if (s.n <= 0) throw DataError("bad record length in " + path);
    s.subtoken_ids.resize(s.n);
    for (int i = 0; i < s.n; ++i) {
      for (int j = 0; j < kSubtokenSlots; ++j) {
        s.subtoken_ids[i][j] = static_cast<int>(rd.get<uint32_t>());
      }
    }
    s.kind_ids.resize(s.n);
    for (int i = 0; i < s.n; ++i) s.kind_ids[i] = rd.get<uint8_t>();
    s.node_type_ids.resize(s.n);
    for (int i = 0; i < s.n; ++i) {
      s.node_type_ids[i] = static_cast<int>(rd.get<uint32_t>());
    }
    s.is_leaf.resize(s.n);
    for (int i = 0; i < s.n; ++i) s.is_leaf[i] = rd.get<uint8_t>();
    s.name_pos = rd.get<int32_t>();
    const uint32_t label_len = rd.get<uint32_t>();
    for (uint32_t i = 0; i < label_len; ++i) {
      s.label_ids.push_back(static_cast<int>(rd.get<uint32_t>()));
      s.label_strings.push_back(rd.get_string());
    }
    const uint32_t n_unk = rd.get<uint32_t>();
    for (uint32_t i = 0; i < n_unk; ++i) {
      const int flat = static_cast<int>(rd.get<uint32_t>());
      s.unk_slots.emplace_back(flat, rd.get_string());
    }
    s.binned.n = s.n;
    s.binned.k = k;
    for (int r = 0; r < kNumRelations; ++r) {
      auto& rel = s.binned.rel[r];
      rel.k = k;
      rel.bin_index.resize(size_t(s.n) * s.n);
      if (rd.pos + rel.bin_index.size() > all.size()) {
        throw DataError("truncated bin_index in " + path);
      }
      std::memcpy(rel.bin_index.data(), all.data() + rd.pos,
                  rel.bin_index.size());
      rd.pos += rel.bin_index.size();
      rel.bin_value.resize(k);
      for (int b = 0; b < k; ++b) {
        rel.bin_value[b] = static_cast<double>(rd.get<float>());
      }
    }
    if (rd.pos != record_end) {
      throw DataError("record length mismatch in " + path);
    }
    shard.snippets.push_back(std::move(s));
  }
  return shard;
}

}  // namespace sct
