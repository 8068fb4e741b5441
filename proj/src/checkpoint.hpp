#pragma once

#include "param_vector.hpp"

#include <string>

namespace gradfix {

// Binary container, little-endian:
//   magic (4 bytes), format version u32 = 1, segment count u32;
//   per segment: name length u32, UTF-8 name, ndim u32, dims as u64,
//   values (f64 for parameter files, i8 for sign/mask files);
//   trailing CRC32 of all preceding bytes.
//
// Magics: "GFX1" parameters, "GFXS" signs, "GFXM" binary masks,
//         "GFXF" signed masks, "GFXE" feature sets.
//
// Writers go through a temporary file and an atomic rename.

void save_checkpoint(const ParamVector & v, const std::string & path);
ParamVector load_checkpoint(const std::string & path);

void save_signs(const SignVector & v, const std::string & path);
SignVector load_signs(const std::string & path);

void save_mask(const MaskVector & m, const std::string & path);
MaskVector load_mask(const std::string & path);

// Feature sets reuse the parameter container under the "GFXE" magic; the
// segment mapping lives with FeatureSet itself.
void save_feature_container(const ParamVector & v, const std::string & path);
ParamVector load_feature_container(const std::string & path);

} // namespace gradfix
