#include <fmt/format.h>

#include "commands.hpp"
#include "nlvae/cost_model.hpp"
#include "nlvae/plot.hpp"

namespace nlvae::cli {

using nlohmann::json;

json to_json(const CostOptions& o) {
  return {{"k", o.k},           {"n_in", o.n_in},     {"p_out", o.p_out},
          {"m_spatial", o.m_spatial}, {"height", o.height}, {"width", o.width},
          {"encoder_blocks", o.encoder_blocks}, {"decoder_blocks", o.decoder_blocks}, {"csv", o.csv}};
}

CostOptions cost_options_from_json(const json& j) {
  CostOptions o;
  try {
    o.k = j.value("k", o.k);
    o.n_in = j.value("n_in", o.n_in);
    o.p_out = j.value("p_out", o.p_out);
    o.m_spatial = j.value("m_spatial", o.m_spatial);
    o.height = j.value("height", o.height);
    o.width = j.value("width", o.width);
    o.encoder_blocks = j.value("encoder_blocks", o.encoder_blocks);
    o.decoder_blocks = j.value("decoder_blocks", o.decoder_blocks);
    o.csv = j.value("csv", o.csv);
  } catch (const json::exception& e) {
    throw ConfigError(std::string("cost options: ") + e.what());
  }
  return o;
}

int cmd_cost(const CostOptions& o, const path& out_dir, Console& console) {
  const ConvCostSpec spec{o.k, o.n_in, o.p_out, o.m_spatial};
  const ReductionFactors f = reduction_factors(spec);
  const ConvCost pw = pointwise_cost(spec);
  const ConvCost sc = standard_cost(spec);
  const ModelConfig model = ModelConfig::with_block_counts(o.encoder_blocks, o.decoder_blocks);
  const CostSummary summary = model_cost_summary(model, o.height, o.width);

  const std::string ratio_row = fmt::format("reduction K={} N={} P={} M={}: F_W = {}  F_O = {}", o.k, o.n_in, o.p_out,
                                            o.m_spatial, f.weights.str(), f.ops.str());
  const std::string ratio_csv = fmt::format(
      "k,n_in,p_out,m_spatial,pointwise_weights,standard_weights,pointwise_macs,standard_macs,f_w,f_o\n"
      "{},{},{},{},{},{},{},{},{},{}\n",
      o.k, o.n_in, o.p_out, o.m_spatial, pw.weights, sc.weights, pw.ops, sc.ops, f.weights.str(), f.ops.str());

  write_text_file(out_dir / "cost.csv", summary.to_csv());
  write_text_file(out_dir / "cost.txt", summary.to_text());
  write_text_file(out_dir / "reduction.csv", ratio_csv);
  if (o.csv) {
    console.info(summary.to_csv() + "\n" + ratio_csv);
  } else {
    console.info(fmt::format("model at {}x{}\n\n{}\n{}", o.width, o.height, summary.to_text(), ratio_row));
  }
  return kExitOk;
}

}  // namespace nlvae::cli
