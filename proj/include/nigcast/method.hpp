#pragma once

#include <array>
#include <string>
#include <string_view>

namespace nigcast {

/// Training objective / output-head family.
enum class Method { mse, huber, gaussian_nll, student_t_nll, quantile, mixture, conformal_base, evidential };

inline constexpr std::array<Method, 8> kAllMethods = {Method::mse,           Method::huber,
                                                      Method::gaussian_nll,  Method::student_t_nll,
                                                      Method::quantile,      Method::mixture,
                                                      Method::conformal_base, Method::evidential};

std::string_view method_name(Method m);
/// Throws ConfigError on an unknown name.
Method parse_method(std::string_view name);

/// Methods that emit no predictive distribution at all (probabilistic metrics NA).
bool is_point_method(Method m);

}  // namespace nigcast
