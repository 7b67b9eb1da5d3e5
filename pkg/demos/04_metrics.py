"""
Ranking and classification metrics
==================================
"""

from usersim.metrics import Ranking, auc, average_precision, f1, ndcg_at_k

# F1 from hard predictions
print("F1:", f1([1, 1, 1, 1, 0, 0], [1, 1, 1, 0, 1, 1]))

# AUC counts ties as half a concordant pair
print("AUC:", auc([0.8, 0.6, 0.4, 0.2], [1, 0, 1, 0]))
print("AUC, all tied:", auc([0.3] * 4, [1, 0, 1, 0]))

# a ranking with the relevant item in second place
r = Ranking(("a", "b", "c", "d"), {"b": 1})
print("AP:", average_precision(r), " NDCG@2:", round(ndcg_at_k(r, 2), 4))

# graded relevance
g = Ranking(("a", "b", "c"), {"a": 1.0, "c": 3.0})
print("graded NDCG@3:", round(ndcg_at_k(g, 3), 4))
