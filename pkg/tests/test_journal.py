"""
Tests pour le journal d'exécution chaîné

Teste :
- L'ajout d'événements
- Le calcul des hash
- La vérification d'intégrité
- La détection de falsification
"""

import json
import os
import shutil
import tempfile
import unittest

from src.config import Config
from src.errors import FormatError
from src.journal import RunJournal, calculer_hash, dernier_hash, lire_journal, verifier_integrite


class TestJournal(unittest.TestCase):
    """Tests pour le journal d'exécution."""

    def setUp(self):
        self.dossier = tempfile.mkdtemp()
        self.chemin = os.path.join(self.dossier, 'journal.jsonl')

    def tearDown(self):
        shutil.rmtree(self.dossier)

    def _remplir(self, n=3):
        journal = RunJournal(self.chemin)
        for i in range(n):
            journal.log_event(f"TEST_{i}", {"numero": i})
        return journal

    def test_calcul_hash(self):
        """Vérifie que le calcul de hash est déterministe."""
        self.assertEqual(calculer_hash("test_data"), calculer_hash("test_data"))
        self.assertNotEqual(calculer_hash("test_data"), calculer_hash("autre_data"))

    def test_journal_vide(self):
        self.assertEqual(lire_journal(self.chemin), [])
        self.assertEqual(dernier_hash(self.chemin), Config.JOURNAL_GENESIS_HASH)
        self.assertEqual(verifier_integrite(self.chemin), (True, []))

    def test_chaine_hash(self):
        """Vérifie que la chaîne de hash est correctement formée."""
        self._remplir()
        entrees = lire_journal(self.chemin)
        self.assertEqual(entrees[0]["hash_precedent"], Config.JOURNAL_GENESIS_HASH)
        for precedente, courante in zip(entrees, entrees[1:]):
            self.assertEqual(courante["hash_precedent"], precedente["hash_actuel"])
        self.assertEqual([e["index"] for e in entrees], [0, 1, 2])

    def test_integrite_valide(self):
        self._remplir()
        valide, erreurs = verifier_integrite(self.chemin)
        self.assertTrue(valide)
        self.assertEqual(len(erreurs), 0)

    def test_reprise_apres_reouverture(self):
        """Un second RunJournal sur le même fichier reprend la chaîne."""
        premier = self._remplir(2)
        second = RunJournal(self.chemin)
        self.assertEqual(second.head, premier.head)
        entree = second.log_event("SUITE")
        self.assertEqual(entree["index"], 2)
        self.assertTrue(verifier_integrite(self.chemin)[0])

    def test_determinisme(self):
        """Deux journaux identiques ont la même tête de chaîne."""
        self._remplir()
        autre = os.path.join(self.dossier, 'autre.jsonl')
        journal = RunJournal(autre)
        for i in range(3):
            journal.log_event(f"TEST_{i}", {"numero": i})
        self.assertEqual(dernier_hash(autre), dernier_hash(self.chemin))

    def test_detection_falsification(self):
        """Modifier les détails d'une entrée casse la vérification."""
        self._remplir()
        with open(self.chemin, encoding='utf-8') as f:
            lignes = f.readlines()
        entree = json.loads(lignes[1])
        entree["details"]["numero"] = 42
        lignes[1] = json.dumps(entree) + "\n"
        with open(self.chemin, 'w', encoding='utf-8') as f:
            f.writelines(lignes)
        valide, erreurs = verifier_integrite(self.chemin)
        self.assertFalse(valide)
        self.assertTrue(any("#1" in e and "corrompues" in e for e in erreurs))

    def test_detection_suppression(self):
        """Supprimer une entrée rompt la chaîne."""
        self._remplir()
        with open(self.chemin, encoding='utf-8') as f:
            lignes = f.readlines()
        with open(self.chemin, 'w', encoding='utf-8') as f:
            f.writelines([lignes[0], lignes[2]])
        valide, erreurs = verifier_integrite(self.chemin)
        self.assertFalse(valide)
        self.assertTrue(any("Rupture" in e for e in erreurs))

    def test_ligne_illisible(self):
        self._remplir(1)
        with open(self.chemin, 'a', encoding='utf-8') as f:
            f.write("{pas du json\n")
        with self.assertRaises(FormatError) as ctx:
            lire_journal(self.chemin)
        self.assertIsNotNone(ctx.exception.offset)


if __name__ == '__main__':
    unittest.main()
