// Time tags and the TTAG binary container.
//
// File layout (little-endian):
//   header  : "TTAG" | u16 version (=1) | u64 record count      (14 bytes)
//   record  : u64 time_ps | u8 station | u8 channel              (10 bytes)

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "qtele/protocol.hpp"

namespace qtele {

enum class Station : std::uint8_t { Alice = 0, Bob = 1 };

struct TimeTag {
  std::uint64_t time_ps = 0;
  Station station = Station::Alice;
  Detector channel = Detector::t;

  friend bool operator==(const TimeTag&, const TimeTag&) = default;
};

/// Sort key for tag streams: time, then channel.
inline bool tag_before(const TimeTag& x, const TimeTag& y) {
  if (x.time_ps != y.time_ps) return x.time_ps < y.time_ps;
  return x.channel < y.channel;
}

bool channel_valid_for(Station station, Detector channel);
std::string_view to_string(Detector channel);
std::string_view to_string(Station station);
Detector parse_detector(std::string_view text);

/// True if times are non-decreasing.
bool is_time_ordered(std::span<const TimeTag> tags);

inline constexpr std::uint16_t kTtagVersion = 1;
inline constexpr std::size_t kTtagHeaderBytes = 14;
inline constexpr std::size_t kTtagRecordBytes = 10;

void write_ttag(std::ostream& out, std::span<const TimeTag> tags);
void write_ttag_file(const std::filesystem::path& path,
                     std::span<const TimeTag> tags);

/// Rejects bad magic, unknown versions, truncated bodies, and channels that
/// are invalid for their station.
std::vector<TimeTag> read_ttag(std::istream& in);
std::vector<TimeTag> read_ttag_file(const std::filesystem::path& path);

}  // namespace qtele
