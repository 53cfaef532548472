#include "coup/harness/results.hpp"

#include <ostream>

#include <boost/uuid/detail/sha1.hpp>
#include <fmt/format.h>
#include "json.hpp"

namespace coup::harness {

std::string format_number(double v) { return fmt::format("{}", v); }

void write_csv(std::ostream& out, const std::vector<ResultRow>& rows) {
  out << "experiment,lambda,c,t_star,step,trials,metric,value,ci_half_width,seed\n";
  for (const auto& r : rows) {
    out << r.experiment << ',' << format_number(r.lambda) << ',' << format_number(r.c) << ','
        << format_number(r.t_star) << ',' << format_number(r.step) << ',' << r.trials << ','
        << r.metric << ',' << format_number(r.value) << ','
        << (r.ci_half_width ? format_number(*r.ci_half_width) : std::string()) << ',' << r.seed
        << '\n';
  }
}

void write_manifest(std::ostream& out, const RunManifest& manifest) {
  const nlohmann::json j = {
      {"config_digest", manifest.config_digest},
      {"master_seed", manifest.master_seed},
      {"version", manifest.version},
      {"wall_clock_seconds", manifest.wall_clock_seconds},
  };
  out << j.dump(2) << '\n';
}

std::string digest(const std::string& text) {
  boost::uuids::detail::sha1 sha;
  sha.process_bytes(text.data(), text.size());
  boost::uuids::detail::sha1::digest_type words;
  sha.get_digest(words);
  std::string hex;
  for (unsigned w : words) hex += fmt::format("{:08x}", w);
  return hex;
}

void write_trace_csv(std::ostream& out, const std::vector<TracePoint>& trace) {
  const Eigen::Index d = trace.empty() ? 0 : trace.front().x.size();
  out << "time";
  for (Eigen::Index i = 0; i < d; ++i) out << ",x" << i;
  out << ",p_true,p_adv\n";
  for (const auto& p : trace) {
    out << format_number(p.time);
    for (Eigen::Index i = 0; i < d; ++i) out << ',' << format_number(p.x[i]);
    out << ',' << format_number(p.p_true) << ',' << format_number(p.p_adv) << '\n';
  }
}

}  // namespace coup::harness
