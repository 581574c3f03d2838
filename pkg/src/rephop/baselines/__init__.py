"""Comparison methods: k-mer kernels with SVM/KNN, logistic regression,
burden test, logistic multiple-instance learning and known-motif scoring."""
