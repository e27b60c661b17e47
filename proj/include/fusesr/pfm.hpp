#pragma once

// PFM images: "PF" (3 channel) / "Pf" (1 channel), scale -1.0 (little
// endian), rows stored bottom-up. Lossless float32 round trip.

#include <string>

#include "fusesr/tensor.hpp"

namespace fusesr {

// img must be (1, c, h, w) with c in {1, 3}.
void write_pfm(const std::string& path, const Tensor& img);

// Returns (1, c, h, w) with c in {1, 3}.
Tensor read_pfm(const std::string& path);

}  // namespace fusesr
