#include "headfuse/rng.hpp"

#include <cmath>

namespace headfuse {

double Rng::normal() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * M_PI * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
}

Eigen::VectorXd Rng::normal_vector(const Eigen::VectorXd& variances) {
    Eigen::VectorXd v(variances.size());
    for (Eigen::Index i = 0; i < variances.size(); ++i)
        v[i] = normal() * std::sqrt(variances[i]);
    return v;
}

Eigen::VectorXd Rng::normal_vector(int n, double sigma) {
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v[i] = normal() * sigma;
    return v;
}

} // namespace headfuse
