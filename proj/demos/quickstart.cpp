// Simulates a CASSI measurement of a small synthetic scene and reconstructs it
// three ways: adjoint initialization, the PnP baseline and diffusion sampling.

#include <iostream>

#include "diffsci/diffsci_solver.hpp"
#include "diffsci/synthetic.hpp"

int main()
{
    using namespace diffsci;
    const SpectralCube truth = smooth_scene(SceneSpec{32, 32, 8}, 7);
    const CassiOperator op(random_mask(32, 32, 11), 2, truth.wavelengths());
    const Measurement y = op.simulate(truth, 0.01, 13);
    const auto sched = DiffusionSchedule::linear();

    const GaussianShrinkPrior shrink(0.5);
    SolverConfig cfg;
    cfg.plan.kind = PlanKind::Sliding;

    std::cout << "adjoint init PSNR  " << mean_psnr(adjoint_initialization(op, y), truth) << " dB\n";
    std::cout << "PnP baseline PSNR  " << mean_psnr(run_pnp_baseline(cfg, sched, op, y, shrink, 10).cube, truth)
              << " dB\n";

    const CubeOraclePrior oracle(truth, cfg.plan.build(truth.wavelengths()));
    cfg.steps = 20;
    cfg.zeta = 0.0;
    std::cout << "oracle sampling    " << mean_psnr(run_diffsci(cfg, sched, op, y, oracle).cube, truth) << " dB\n";
}
