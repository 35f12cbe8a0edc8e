// Generate a few designs, train a small scorer briefly, score a good and a
// perturbed design, then refine one text element.
#include <cstdio>

#include "dscore.hpp"

int main() {
  using namespace dscore;

  const auto docs = generate_synthetic(1, 120, 8);
  const std::vector<DesignDocument> train_docs(docs.begin(), docs.begin() + 100);
  const std::vector<DesignDocument> val_docs(docs.begin() + 100, docs.end());
  const auto train_pairs = build_pairs(train_docs, PairSetting::Biased, 2);
  const auto val_pairs = build_pairs(val_docs, PairSetting::Biased, 3);

  ScorerConfig sc;
  sc.input_size = 64;
  Scorer model(sc, 4);
  TrainConfig tc;
  tc.epochs = 3;
  tc.on_epoch = [](const EpochReport& e) {
    std::printf("epoch %d  loss %.4f  val RAcc %.3f\n", e.epoch, e.train_loss, e.val_racc);
  };
  train(model, train_pairs, val_pairs, tc);

  const DesignPair& p = val_pairs.front();
  std::printf("good %.4f  bad (%s) %.4f\n", score(model, p.good), std::string(to_string(p.kind)).c_str(),
              score(model, p.bad));

  std::size_t text = 0;
  while (p.good.elements[text].kind != ElementKind::Text) ++text;
  GaConfig ga;
  ga.population_size = 20;
  ga.n_trials = 200;
  const auto r = refine_text(model, p.good, text, ga);
  std::printf("refine-text: random start %.4f -> refined %.4f (%zu evaluations)\n", r.initial_score, r.refined_score,
              r.run.evaluations);
  std::printf("%s", save_document(r.refined).c_str());
}
