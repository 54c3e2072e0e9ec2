#pragma once

namespace factorlasso {

// Standard normal CDF.
double normal_cdf(double x);

// Standard normal quantile (inverse CDF), Wichura's rational approximation,
// |error| < 1e-15 over (0,1). Throws on prob outside (0,1).
double normal_quantile(double prob);

}  // namespace factorlasso
