#pragma once

#include "ldae/volume.hpp"

namespace ldae::evaluation {

// Mean local SSIM with a uniform 7^3 window over the valid (unpadded) region,
// C1 = 0.01^2, C2 = 0.03^2, data range 1. Inputs are clamped to [0,1] first.
double ssim3d(const Volume& a, const Volume& b);

double mse(const Volume& a, const Volume& b);

}  // namespace ldae::evaluation
