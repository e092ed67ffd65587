// Trains on synthetic seven-segment digits and writes figure data.
//
//   glyph_demo [out_dir] [iterations]
//
// The glyphs are also saved as IDX files (glyphs-images.idx, glyphs-labels.idx)
// so the same data can be fed to `bpdc train --data ... --scaling raw`.

#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "bpdc/bpdc.hpp"

int main(int argc, char** argv) {
  namespace fs = std::filesystem;
  const fs::path out = argc > 1 ? argv[1] : "glyph_demo_out";
  const long iters = argc > 2 ? std::atol(argv[2]) : 500;

  bpdc::Rng rng(2024);
  bpdc::Dataset data = bpdc::make_glyph_digits(2000, rng);
  data.X *= 255.0;  // raw pixel scale, where the default sigma = 10 applies
  data.scaling = bpdc::Scaling::kRaw;
  bpdc::write_idx_images(out / "glyphs-images.idx", data.X, data.image_rows, data.image_cols);
  bpdc::write_idx_labels(out / "glyphs-labels.idx", *data.labels);

  bpdc::HyperParams h;
  h.K = 30;
  h.M = 64;
  h.D = data.D();
  h.L_max = h.K;
  bpdc::TrainConfig cfg;
  cfg.batch_size = 100;
  cfg.n_iters = iters;
  cfg.log_every = 50;
  cfg.seed = 1;

  bpdc::Trainer trainer(data.X, bpdc::initial_state(bpdc::make_model(h, {100, 100}, bpdc::Activation::kTanh, rng), cfg), cfg);
  trainer.set_metrics_sink([](const bpdc::MetricsRow& r) {
    std::printf("iter %5lu  mse %9.2f  bits/code %.2f  active factors %d\n",
                static_cast<unsigned long>(r.iter), r.mse, r.mean_card, r.active_factors);
  });
  trainer.run(cfg.n_iters);

  const auto& st = trainer.state();
  const auto codes = bpdc::encode_all(data.X, st.model, st.bank, st.mask);
  const auto report = bpdc::export_figures(st.model, st.bank, data, codes, out, trainer.pi_trace());
  for (const auto& p : report.written) std::printf("wrote %s\n", p.string().c_str());
  bpdc::save_checkpoint(out / "glyphs.ckpt", st);
  return 0;
}
