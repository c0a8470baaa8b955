# utilitaires élémentaires → doubler
def double(x):
    return x * 2
