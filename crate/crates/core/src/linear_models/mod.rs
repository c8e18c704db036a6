//! Classifiers over sparse bag-of-token vectors: multinomial naive Bayes,
//! one-vs-rest logistic regression, one-vs-all linear SVMs and Gini tree
//! ensembles (bagged forests and SAMME boosting).

mod linear;
mod naive_bayes;
mod tree;

pub use linear::{gradcheck_fixture, logreg_fit, svm_fit, LinearConfig, LinearKind, LinearModel, Multiclass};
pub use naive_bayes::{nb_fit, NaiveBayesModel};
pub use tree::{
    adaboost_fit, adaboost_fit_traced, ensemble_predict, fit_tree, rf_fit, BoostConfig, DecisionTree, EnsembleKind,
    ForestConfig, Node, RoundTrace, TreeEnsemble, ERROR_FLOOR,
};
