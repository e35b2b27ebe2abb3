// One trial on a small synthetic dataset, stage by stage.
#include <iostream>

#include "pcenet/pcenet.hpp"

using namespace pcenet;

int main() {
  RunConfig cfg;
  cfg.data.synth = SynthSpec{.n = 300, .m = 8, .d_true = 2, .degree = 2, .noise_sd = 0.0, .seed = 3};
  cfg.vae.hidden_dim = 16;
  cfg.vae.latent_dim = 2;
  cfg.vae.learning_rate = 1e-2;
  cfg.vae.epochs = 60;
  cfg.vae.recon_weight = 300;
  cfg.pce_degree = 2;
  cfg.mmd.sigma_grid = {0.1, 1, 10};
  cfg.mmd.max_iterations = 500;

  const Dataset ds = load_dataset(cfg.data);
  const TrialData t = prepare_trial(ds, cfg, 0);
  std::cout << "vae loss " << t.vae_epoch_losses.front() << " -> " << t.vae_epoch_losses.back()
            << '\n';

  const FitOutcome fit = fit_stage(ds, t, cfg, FitMethod::mmd);
  std::cout << "sigma " << fit.trace.sigma << ", cv table:\n";
  for (const auto& e : fit.trace.cv_table)
    std::cout << "  " << e.sigma << "  " << (e.cv_loss ? std::to_string(*e.cv_loss) : e.error) << '\n';

  const MeanVar g = global_moments(fit.model);
  std::cout << "global mean " << g.mean << ", variance " << g.variance << '\n';

  const LatentPosterior& p = t.latent.posteriors[t.split.test.front()];
  const MeanVar c = conditional_mean_var(fit.model, p, QuadratureMethod{3});
  std::cout << "first test point: y " << ds.targets[t.split.test.front()] << ", mean " << c.mean
            << ", sd " << std::sqrt(c.variance) << '\n';

  const EvalReport r = evaluate_stage(ds, t, fit.model, cfg);
  std::cout << "epsilon_gen " << r.epsilon_gen << ", within one sd "
            << fraction_within(r.residuals, 1.0) << '\n';
}
