#pragma once

#include "sasg/binary_io.hpp"
#include "sasg/nn/tape.hpp"

namespace sasg::nn {

/// Manifest (name, offset, length per tensor) followed by the float32 buffer.
inline void write_parameters(io::Writer& w, const ParameterSet<float>& ps) {
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ps.size()));
  std::uint64_t offset = 0;
  for (const auto& p : ps) {
    w.put_string(p.name);
    w.put<std::uint64_t>(offset);
    w.put<std::uint64_t>(static_cast<std::uint64_t>(p.value.size()));
    offset += static_cast<std::uint64_t>(p.value.size());
  }
  w.put<std::uint64_t>(offset);
  for (const auto& p : ps) w.put_f32(p.value);
}

/// Reads into a ParameterSet already shaped by its architecture; the
/// manifest must match name for name.
inline void read_parameters(io::Reader& r, ParameterSet<float>& ps) {
  const auto count = r.get<std::uint32_t>();
  if (count != ps.size()) throw ParseError(ParseError::Kind::ShapeMismatch, "parameter manifest count mismatch");
  std::uint64_t expected_offset = 0;
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const std::string name = r.get_string();
    const auto offset = r.get<std::uint64_t>();
    const auto length = r.get<std::uint64_t>();
    if (name != ps[i].name || offset != expected_offset ||
        length != static_cast<std::uint64_t>(ps[i].value.size()))
      throw ParseError(ParseError::Kind::ShapeMismatch, "parameter manifest mismatch at " + name);
    expected_offset += length;
  }
  const auto total = r.get<std::uint64_t>();
  if (total != expected_offset) throw ParseError(ParseError::Kind::ShapeMismatch, "parameter buffer length mismatch");
  for (auto& p : ps) r.get_f32(p.value.data(), static_cast<std::size_t>(p.value.size()));
  if (!ps.all_finite()) throw ParseError(ParseError::Kind::BadValue, "non-finite parameters");
}

}  // namespace sasg::nn
