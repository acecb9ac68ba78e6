#pragma once

#include <algorithm>
#include <array>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "bspft/atomic_file.hpp"
#include "bspft/bytes.hpp"
#include "bspft/clock.hpp"
#include "bspft/crc32.hpp"
#include "bspft/error.hpp"
#include "bspft/state_registry.hpp"

namespace bspft {

// On-disk layout, little-endian throughout:
//
//   magic "DLCKPT01" | version u16 | epoch u64 | created_at_us u64 | count u32
//   count x { id_len u8 | id | scope u8 | worker u32 | offset u64 | length u64 | crc32 u32 }
//   header crc32 u32 (over every preceding byte)
//   payloads, concatenated in entry order
//
// Offsets are relative to the start of the payload region.
inline constexpr std::array<std::uint8_t, 8> kCheckpointMagic = {0x44, 0x4C, 0x43, 0x4B, 0x50, 0x54, 0x30, 0x31};
inline constexpr std::uint16_t kCheckpointFormatVersion = 1;
inline constexpr std::size_t kCheckpointFixedHeaderBytes = 8 + 2 + 8 + 8 + 4;

struct SegmentEntry {
  std::string id;
  SegmentScope scope = SegmentScope::global();
  std::uint64_t offset = 0;
  std::uint64_t length = 0;
  std::uint32_t checksum = 0;

  friend bool operator==(const SegmentEntry&, const SegmentEntry&) = default;
};

struct CheckpointManifest {
  std::uint64_t epoch = 0;
  std::uint64_t created_at_us = 0;
  std::vector<SegmentEntry> entries;
  bool committed = false;
};

struct CheckpointSegment {
  std::string id;
  SegmentScope scope = SegmentScope::global();
  Bytes payload;

  friend bool operator==(const CheckpointSegment&, const CheckpointSegment&) = default;
};

inline Bytes encode_checkpoint(std::uint64_t epoch, std::uint64_t created_at_us, const Snapshot& snapshot) {
  for (std::size_t i = 1; i < snapshot.size(); ++i) {
    if (!(snapshot[i - 1].id < snapshot[i].id))
      throw Error(ErrorCode::InvalidId, "snapshot entries must be strictly ascending by id: " + snapshot[i].id);
  }
  Bytes out;
  ByteWriter w(out);
  w.raw(ByteView(kCheckpointMagic));
  w.u16(kCheckpointFormatVersion);
  w.u64(epoch);
  w.u64(created_at_us);
  w.u32(static_cast<std::uint32_t>(snapshot.size()));
  std::uint64_t offset = 0;
  for (const auto& e : snapshot) {
    validate_segment_id(e.id);
    validate_payload_size(e.payload.size());
    w.u8(static_cast<std::uint8_t>(e.id.size()));
    w.raw(e.id);
    w.u8(e.scope.is_global() ? 0 : 1);
    w.u32(e.scope.worker().value_or(0));
    w.u64(offset);
    w.u64(e.payload.size());
    w.u32(crc32(e.payload));
    offset += e.payload.size();
  }
  w.u32(crc32(out));
  for (const auto& e : snapshot) w.raw(e.payload);
  return out;
}

// Result of parsing a checkpoint image. Fields are filled as far as parsing
// got, so inspect can report partial headers of broken files.
struct ParsedCheckpoint {
  bool header_parsed = false;
  std::uint16_t format_version = 0;
  CheckpointManifest manifest;
  std::uint32_t declared_entries = 0;
  std::optional<std::uint32_t> header_checksum;
  std::vector<CheckpointSegment> segments;
  std::string verdict;

  bool valid() const noexcept { return verdict == "valid"; }
};

inline ParsedCheckpoint parse_checkpoint(ByteView image) {
  ParsedCheckpoint p;
  auto fail = [&](std::string why) {
    p.verdict = "invalid: " + std::move(why);
    p.segments.clear();
    return p;
  };

  ByteReader r(image);
  auto magic = r.raw(kCheckpointMagic.size());
  if (!magic) {
    bool prefix_ok = std::equal(image.begin(), image.end(), kCheckpointMagic.begin());
    return fail(prefix_ok && !image.empty() ? "truncated header" : "bad magic");
  }
  if (!std::equal(magic->begin(), magic->end(), kCheckpointMagic.begin())) return fail("bad magic");

  auto version = r.u16();
  if (!version) return fail("truncated header");
  p.format_version = *version;
  if (*version != kCheckpointFormatVersion) return fail("unsupported format version " + std::to_string(*version));
  auto epoch = r.u64();
  auto created = r.u64();
  auto count = r.u32();
  if (!epoch || !created || !count) return fail("truncated header");
  p.header_parsed = true;
  p.manifest.epoch = *epoch;
  p.manifest.created_at_us = *created;
  p.declared_entries = *count;

  std::uint64_t expected_offset = 0;
  for (std::uint32_t i = 0; i < *count; ++i) {
    auto id_len = r.u8();
    if (!id_len) return fail("truncated entry table");
    auto id = r.raw(*id_len);
    auto tag = r.u8();
    auto worker = r.u32();
    auto offset = r.u64();
    auto length = r.u64();
    auto checksum = r.u32();
    if (!id || !tag || !worker || !offset || !length || !checksum) return fail("truncated entry table");
    SegmentEntry e;
    e.id.assign(id->begin(), id->end());
    if (e.id.empty() || e.id.find('\0') != std::string::npos) return fail("bad entry id");
    if (*tag == 0 && *worker == 0) {
      e.scope = SegmentScope::global();
    } else if (*tag == 1) {
      e.scope = SegmentScope::local(*worker);
    } else {
      return fail("bad scope tag");
    }
    e.offset = *offset;
    e.length = *length;
    e.checksum = *checksum;
    if (!p.manifest.entries.empty() && !(p.manifest.entries.back().id < e.id))
      return fail("entry table not sorted");
    if (e.offset != expected_offset) return fail("non-contiguous payload layout");
    if (e.length > kMaxSegmentBytes) return fail("segment too large");
    expected_offset += e.length;
    p.manifest.entries.push_back(std::move(e));
  }

  const std::size_t table_end = r.position();
  auto header_crc = r.u32();
  if (!header_crc) return fail("truncated entry table");
  p.header_checksum = *header_crc;
  if (crc32(image.first(table_end)) != *header_crc) return fail("header checksum mismatch");

  if (r.remaining() < expected_offset) return fail("truncated payload");
  if (r.remaining() > expected_offset) return fail("trailing bytes after payload region");
  for (const auto& e : p.manifest.entries) {
    ByteView payload = *r.raw(e.length);
    if (crc32(payload) != e.checksum) return fail("payload checksum mismatch for '" + e.id + "'");
    p.segments.push_back(CheckpointSegment{e.id, e.scope, Bytes(payload.begin(), payload.end())});
  }
  p.manifest.committed = true;
  p.verdict = "valid";
  return p;
}

// ---------------------------------------------------------------------------
// Directory-level operations

inline std::string checkpoint_file_name(std::uint64_t epoch) {
  std::ostringstream os;
  os << "ckpt-" << std::setw(10) << std::setfill('0') << epoch << ".dck";
  return os.str();
}

// Epoch encoded in a final checkpoint name, or nullopt for any other file
// (including in-flight ".dck.tmp" files).
inline std::optional<std::uint64_t> parse_checkpoint_file_name(std::string_view name) {
  constexpr std::string_view prefix = "ckpt-", suffix = ".dck";
  if (!name.starts_with(prefix) || !name.ends_with(suffix)) return std::nullopt;
  std::string_view digits = name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
  if (digits.size() < 10) return std::nullopt;
  std::uint64_t epoch = 0;
  auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), epoch);
  if (ec != std::errc{} || ptr != digits.data() + digits.size()) return std::nullopt;
  return epoch;
}

struct CheckpointFile {
  std::uint64_t epoch;
  std::filesystem::path path;
};

// Checkpoint files by name, ascending epoch. Contents are not validated.
inline std::vector<CheckpointFile> list_checkpoints(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::directory_iterator it(dir, ec);
  if (ec) throw Error(ErrorCode::IoFailure, "cannot read directory " + dir.string() + ": " + ec.message());
  std::vector<CheckpointFile> out;
  for (const auto& entry : it) {
    if (auto epoch = parse_checkpoint_file_name(entry.path().filename().string())) {
      out.push_back({*epoch, entry.path()});
    }
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.epoch < b.epoch; });
  return out;
}

struct CommitOptions {
  std::optional<std::uint64_t> created_at_us;  // pin for byte-deterministic files
  BeforeRenameHook before_rename;              // fault-injection point
};

inline std::string commit_checkpoint(const std::filesystem::path& dir, std::uint64_t epoch,
                                     const Snapshot& snapshot, const CommitOptions& options = {}) {
  auto existing = list_checkpoints(dir);
  if (!existing.empty() && existing.back().epoch >= epoch)
    throw Error(ErrorCode::NonMonotonicEpoch, "epoch " + std::to_string(epoch) + " is not greater than committed epoch " +
                                                  std::to_string(existing.back().epoch));
  Bytes image = encode_checkpoint(epoch, options.created_at_us.value_or(wall_now_us()), snapshot);
  std::string name = checkpoint_file_name(epoch);
  write_file_atomically(dir / name, image, options.before_rename);
  return name;
}

struct RestoredCheckpoint {
  std::uint64_t epoch = 0;
  std::uint64_t created_at_us = 0;
  std::vector<CheckpointSegment> segments;
  std::filesystem::path path;

  const CheckpointSegment* find(std::string_view id) const {
    for (const auto& s : segments)
      if (s.id == id) return &s;
    return nullptr;
  }
};

// Highest-epoch checkpoint that validates completely. Invalid files are
// skipped and left on disk.
inline std::optional<RestoredCheckpoint> restore_latest(const std::filesystem::path& dir) {
  auto files = list_checkpoints(dir);
  for (auto it = files.rbegin(); it != files.rend(); ++it) {
    Bytes image;
    try {
      image = read_file(it->path);
    } catch (const Error&) {
      continue;  // vanished or unreadable file: skip like any other bad checkpoint
    }
    ParsedCheckpoint parsed = parse_checkpoint(image);
    if (!parsed.valid() || parsed.manifest.epoch != it->epoch) continue;
    return RestoredCheckpoint{parsed.manifest.epoch, parsed.manifest.created_at_us, std::move(parsed.segments),
                              it->path};
  }
  return std::nullopt;
}

// Keeps the `retention` highest-epoch valid checkpoints and deletes older
// valid ones. Returns deleted file names, ascending.
inline std::vector<std::string> prune_checkpoints(const std::filesystem::path& dir, std::uint32_t retention) {
  if (retention < 2)
    throw Error(ErrorCode::RetentionTooSmall, "retention must be at least 2, got " + std::to_string(retention));
  auto files = list_checkpoints(dir);
  std::vector<CheckpointFile> valid;
  for (const auto& f : files) {
    try {
      if (parse_checkpoint(read_file(f.path)).valid()) valid.push_back(f);
    } catch (const Error&) {
    }
  }
  std::vector<std::string> deleted;
  if (valid.size() <= retention) return deleted;
  for (std::size_t i = 0; i < valid.size() - retention; ++i) {
    std::error_code ec;
    if (!std::filesystem::remove(valid[i].path, ec) && ec)
      throw Error(ErrorCode::IoFailure, "cannot delete " + valid[i].path.string() + ": " + ec.message());
    deleted.push_back(valid[i].path.filename().string());
  }
  return deleted;
}

struct InspectReport {
  std::vector<std::pair<std::string, std::string>> fields;
  std::string verdict;

  bool valid() const noexcept { return verdict == "valid"; }

  std::string to_text() const {
    std::string out;
    for (const auto& [k, v] : fields) out += k + ": " + v + "\n";
    return out;
  }
};

inline std::string hex32(std::uint32_t v) {
  std::ostringstream os;
  os << "0x" << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

// Line-oriented description of a checkpoint file, one "key: value" per line.
// Never modifies the file.
inline InspectReport inspect_checkpoint(const std::filesystem::path& file) {
  Bytes image = read_file(file);
  ParsedCheckpoint p = parse_checkpoint(image);
  InspectReport rep;
  auto add = [&](std::string k, std::string v) { rep.fields.emplace_back(std::move(k), std::move(v)); };
  add("file", file.string());
  add("size_bytes", std::to_string(image.size()));
  if (p.header_parsed) {
    add("format_version", std::to_string(p.format_version));
    add("epoch", std::to_string(p.manifest.epoch));
    add("created_at_us", std::to_string(p.manifest.created_at_us));
    add("entry_count", std::to_string(p.declared_entries));
    for (std::size_t i = 0; i < p.manifest.entries.size(); ++i) {
      const auto& e = p.manifest.entries[i];
      std::string key = "entry." + std::to_string(i);
      add(key + ".id", e.id);
      add(key + ".scope", e.scope.to_string());
      add(key + ".offset", std::to_string(e.offset));
      add(key + ".length", std::to_string(e.length));
      add(key + ".checksum", hex32(e.checksum));
    }
    if (p.header_checksum) add("header_checksum", hex32(*p.header_checksum));
  }
  rep.verdict = p.verdict;
  add("verdict", p.verdict);
  return rep;
}

}  // namespace bspft
