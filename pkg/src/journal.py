"""
journal.py - Journal d'exécution chaîné (JSON lines)

Chaque événement (début d'entraînement, fin d'époque, écriture d'un point de
contrôle...) est ajouté à un fichier .jsonl. Une entrée contient le hash de
l'entrée précédente ; son propre hash est le SHA-256 de son contenu en JSON
canonique (clés triées, séparateurs compacts). La première entrée chaîne
sur Config.JOURNAL_GENESIS_HASH.

Aucune heure n'entre dans les données hachées : deux exécutions avec la même
graine produisent la même tête de chaîne.
"""

import hashlib
import json
import logging
import os

from src.config import Config
from src.errors import FormatError

logger = logging.getLogger(__name__)


def calculer_hash(data):
    """
    Calcule le hash SHA-256 d'une chaîne de caractères.
    """
    return hashlib.sha256(data.encode('utf-8')).hexdigest()


def _canonique(payload):
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":"))


def _payload(index, event, details, hash_precedent):
    return {
        "index": index,
        "event": event,
        "details": details,
        "hash_precedent": hash_precedent,
    }


def lire_journal(path):
    """Liste des entrées du journal (vide si le fichier n'existe pas)."""
    if not os.path.exists(path):
        return []
    entries = []
    offset = 0
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            if line.strip():
                try:
                    entries.append(json.loads(line))
                except json.JSONDecodeError as e:
                    raise FormatError(f"Journal {path} : ligne illisible ({e.msg})", offset=offset + e.pos)
            offset += len(line.encode('utf-8'))
    return entries


def dernier_hash(path):
    entries = lire_journal(path)
    return entries[-1]["hash_actuel"] if entries else Config.JOURNAL_GENESIS_HASH


class RunJournal:
    """
    Journal attaché à un fichier ; garde en mémoire la tête de chaîne.
    """

    def __init__(self, path):
        self.path = path
        entries = lire_journal(path)
        self.index = len(entries)
        self.head = entries[-1]["hash_actuel"] if entries else Config.JOURNAL_GENESIS_HASH

    def log_event(self, event, details=None):
        """
        Ajoute un événement au journal.

        Args:
            event (str): type d'événement (ex : 'TRAIN_START', 'EPOCH')
            details (dict, optional): données JSON de l'événement

        Returns:
            dict: l'entrée écrite (avec hash_actuel)
        """
        payload = _payload(self.index, event, details, self.head)
        entry = dict(payload, hash_actuel=calculer_hash(_canonique(payload)))
        with open(self.path, 'a', encoding='utf-8') as f:
            f.write(_canonique(entry) + "\n")
        self.index += 1
        self.head = entry["hash_actuel"]
        logger.debug("Journal : %s enregistré (%s)", event, self.head[:12])
        return entry


def verifier_integrite(path):
    """
    Vérifie l'intégrité complète de la chaîne.

    Parcourt toutes les entrées et vérifie :
    1. Que hash_precedent correspond au hash_actuel de l'entrée d'avant.
    2. Que hash_actuel est valide par rapport aux données.
    3. Que les index se suivent.

    Returns:
        tuple: (bool, list) - (Valide?, Liste des erreurs trouvées)
    """
    erreurs = []
    hash_attendu_precedent = Config.JOURNAL_GENESIS_HASH
    for position, entry in enumerate(lire_journal(path)):
        try:
            payload = _payload(entry["index"], entry["event"], entry["details"], entry["hash_precedent"])
            hash_stocke = entry["hash_actuel"]
        except KeyError as e:
            erreurs.append(f"Entrée #{position} : champ manquant {e}")
            continue
        if entry["index"] != position:
            erreurs.append(f"Entrée #{position} : index {entry['index']} inattendu")
        if entry["hash_precedent"] != hash_attendu_precedent:
            erreurs.append(f"Entrée #{position} : Rupture de chaîne (Hash précédent invalide)")
        if calculer_hash(_canonique(payload)) != hash_stocke:
            erreurs.append(f"Entrée #{position} : Données corrompues (Hash invalide)")
        hash_attendu_precedent = hash_stocke
    return len(erreurs) == 0, erreurs
