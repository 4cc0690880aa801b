#include "shppo/gradcheck.hpp"

namespace shppo {

GradCheck check_gradient(ParamStore& params, const LossBuilder& build, double h,
                         const std::function<void(ParamStore&)>& tamper) {
  params.zero_grad();
  GradCheck result;
  {
    Tape tape;
    tape.backward(build(tape, Params::trainable(params)));
    result.kink_margin = tape.kink_margin();
  }
  if (tamper) tamper(params);
  const auto numeric = finite_diff_grad(
      [&](ParamStore& p) {
        Tape tape;
        return build(tape, Params::frozen(p)).value()[0];
      },
      params, h);
  result.rel_error = gradient_relative_error(params, numeric);
  return result;
}

}  // namespace shppo
