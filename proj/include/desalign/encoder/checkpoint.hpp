#pragma once

#include <iosfwd>
#include <string>

#include "desalign/encoder/params.hpp"

namespace desalign::encoder {

inline constexpr int kCheckpointVersion = 1;

/// Text dump: a version line, the config, then every tensor as a
/// "name rows cols" header followed by shortest round-trip values.
void write_checkpoint(const EncoderParams& params, std::ostream& out);
void save_checkpoint(const EncoderParams& params, const std::string& path);

/// Throws IngestionError with the offending line on malformed input.
EncoderParams read_checkpoint(std::istream& in, const std::string& label);
EncoderParams load_checkpoint(const std::string& path);

}  // namespace desalign::encoder
