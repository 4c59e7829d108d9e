#include "qtele/time_tag.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "qtele/errors.hpp"

namespace qtele {

namespace {

constexpr std::array<char, 4> kMagic = {'T', 'T', 'A', 'G'};

template <class T>
void put_le(std::ostream& out, T value) {
  std::array<char, sizeof(T)> bytes{};
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    bytes[i] = static_cast<char>((static_cast<std::uint64_t>(value) >> (8 * i)) & 0xFF);
  }
  out.write(bytes.data(), bytes.size());
}

template <class T>
T get_le(const unsigned char* p) {
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(p[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

bool channel_valid_for(Station station, Detector channel) {
  const auto c = static_cast<std::uint8_t>(channel);
  if (station == Station::Alice) return c <= static_cast<std::uint8_t>(Detector::d);
  return c >= static_cast<std::uint8_t>(Detector::e) &&
         c <= static_cast<std::uint8_t>(Detector::ff);
}

std::string_view to_string(Detector channel) {
  switch (channel) {
    case Detector::t: return "t";
    case Detector::a: return "a";
    case Detector::b: return "b";
    case Detector::c: return "c";
    case Detector::d: return "d";
    case Detector::e: return "e";
    case Detector::f: return "f";
    case Detector::ff: return "ff";
  }
  return "?";
}

std::string_view to_string(Station station) {
  return station == Station::Alice ? "Alice" : "Bob";
}

Detector parse_detector(std::string_view text) {
  for (std::uint8_t c = 0; c <= static_cast<std::uint8_t>(Detector::ff); ++c) {
    const auto det = static_cast<Detector>(c);
    if (to_string(det) == text) return det;
  }
  throw InvalidInput("unknown detector channel '" + std::string(text) + "'");
}

bool is_time_ordered(std::span<const TimeTag> tags) {
  for (std::size_t i = 1; i < tags.size(); ++i) {
    if (tags[i].time_ps < tags[i - 1].time_ps) return false;
  }
  return true;
}

void write_ttag(std::ostream& out, std::span<const TimeTag> tags) {
  out.write(kMagic.data(), kMagic.size());
  put_le<std::uint16_t>(out, kTtagVersion);
  put_le<std::uint64_t>(out, tags.size());

  std::vector<char> buffer;
  buffer.reserve(tags.size() * kTtagRecordBytes);
  for (const TimeTag& tag : tags) {
    for (std::size_t i = 0; i < 8; ++i) {
      buffer.push_back(static_cast<char>((tag.time_ps >> (8 * i)) & 0xFF));
    }
    buffer.push_back(static_cast<char>(tag.station));
    buffer.push_back(static_cast<char>(tag.channel));
  }
  out.write(buffer.data(), static_cast<std::streamsize>(buffer.size()));
  if (!out) throw std::runtime_error("write_ttag: stream write failed");
}

void write_ttag_file(const std::filesystem::path& path,
                     std::span<const TimeTag> tags) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_ttag(out, tags);
}

std::vector<TimeTag> read_ttag(std::istream& in) {
  std::array<unsigned char, kTtagHeaderBytes> header{};
  in.read(reinterpret_cast<char*>(header.data()), header.size());
  if (in.gcount() != static_cast<std::streamsize>(header.size())) {
    throw InvalidInput("TTAG: truncated header");
  }
  for (std::size_t i = 0; i < kMagic.size(); ++i) {
    if (header[i] != static_cast<unsigned char>(kMagic[i])) {
      throw InvalidInput("TTAG: bad magic");
    }
  }
  const auto version = get_le<std::uint16_t>(header.data() + 4);
  if (version != kTtagVersion) {
    throw InvalidInput("TTAG: unsupported version " + std::to_string(version));
  }
  const auto count = get_le<std::uint64_t>(header.data() + 6);

  std::vector<unsigned char> body(count * kTtagRecordBytes);
  in.read(reinterpret_cast<char*>(body.data()), static_cast<std::streamsize>(body.size()));
  if (static_cast<std::size_t>(in.gcount()) != body.size()) {
    throw InvalidInput("TTAG: body shorter than record count");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw InvalidInput("TTAG: trailing bytes after last record");
  }

  std::vector<TimeTag> tags(count);
  for (std::size_t i = 0; i < count; ++i) {
    const unsigned char* rec = body.data() + i * kTtagRecordBytes;
    TimeTag& tag = tags[i];
    tag.time_ps = get_le<std::uint64_t>(rec);
    if (rec[8] > 1) throw InvalidInput("TTAG: invalid station byte");
    tag.station = static_cast<Station>(rec[8]);
    if (rec[9] > static_cast<unsigned char>(Detector::ff)) {
      throw InvalidInput("TTAG: invalid channel byte");
    }
    tag.channel = static_cast<Detector>(rec[9]);
    if (!channel_valid_for(tag.station, tag.channel)) {
      throw InvalidInput("TTAG: channel not valid for station");
    }
  }
  return tags;
}

std::vector<TimeTag> read_ttag_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path.string());
  return read_ttag(in);
}

}  // namespace qtele
