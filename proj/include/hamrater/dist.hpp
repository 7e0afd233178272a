#pragma once

namespace hamrater::dist {

// Regularized incomplete beta function I_x(a, b), a, b > 0, x in [0, 1].
double regularized_incomplete_beta(double a, double b, double x);

// Two-sided tail of Student's t with df degrees of freedom.
double student_t_two_sided_p(double t, double df);

// Upper tail P(F > f) for an F distribution with (df1, df2) degrees of freedom.
double f_upper_tail_p(double f, double df1, double df2);

// Two-sided normal tail for |z|.
double normal_two_sided_p(double z);

}  // namespace hamrater::dist
