#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace sct {

// Subtoken (and node-type) vocabulary. Special entries come first and are
// always present; regular entries are ordered by count descending then
// lexicographically, which makes two builds over the same corpus
// byte-identical on disk.
class Vocabulary {
 public:
  // Fixed special ids for the subtoken vocabulary.
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kMaskString = 2;
  static constexpr int kMaskNumber = 3;
  static constexpr int kIndent = 4;
  static constexpr int kDedent = 5;
  static constexpr int kNameMask = 6;
  static constexpr int kEon = 7;

  static const std::vector<std::string>& subtoken_specials();
  static const std::vector<std::string>& node_type_specials();  // [UNK]

  Vocabulary() = default;
  explicit Vocabulary(std::vector<std::string> specials, long min_count = 1);

  void count(const std::string& subtoken, long c = 1);

  // Freezes counted entries into ids. Entries below min_count are dropped.
  void finalize();

  // Union of already-finalized vocabularies: membership is the union,
  // counts are summed, ids reassigned deterministically.
  static Vocabulary union_of(const std::vector<Vocabulary>& vocabs);

  // Lookup; special names hit their special id, unknown strings map to the
  // vocabulary's UNK special (by name "[UNK]").
  int id(const std::string& subtoken) const;
  bool contains(const std::string& subtoken) const;
  const std::string& name(int id) const;
  int size() const { return static_cast<int>(names_.size()); }
  int n_specials() const { return static_cast<int>(specials_.size()); }
  int unk_id() const { return unk_id_; }
  long min_count() const { return min_count_; }

  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

  // FNV-1a over the serialized form; embedded in shards and checkpoints to
  // detect mismatched artifacts early.
  uint64_t hash() const;

 private:
  std::string serialize() const;

  std::vector<std::string> specials_;
  long min_count_ = 1;
  std::unordered_map<std::string, long> counts_;
  std::vector<std::string> names_;             // id -> name (specials first)
  std::vector<long> entry_counts_;             // id -> count (0 for specials)
  std::unordered_map<std::string, int> ids_;   // name -> id
  int unk_id_ = -1;
  bool finalized_ = false;
};

uint64_t fnv1a64(const void* data, size_t len, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace sct
