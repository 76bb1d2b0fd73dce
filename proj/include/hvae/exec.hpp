#pragma once

namespace hvae {

/// Serial is the deterministic reference path; parallel runs the OpenMP
/// kernels and is not guaranteed bit-identical to it.
enum class Exec { serial, parallel };

}  // namespace hvae
